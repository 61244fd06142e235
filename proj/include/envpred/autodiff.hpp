#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "envpred/tensor.hpp"

namespace envpred::ad {

enum class Act { relu, tanh, gated };
enum class Padding { none, same_frequency };
enum class Alignment { causal_time, symmetric_time, not_applicable };

struct ConvSpec {
  int kt = 1, kf = 1;
  int dt = 1, df = 1;
  Padding padding = Padding::none;
  Alignment alignment = Alignment::not_applicable;
  int in_features = 1, out_features = 1;
};

// Time index of output row 0 measured on the input clock. Causal stacks are
// aligned to the newest tap, symmetric stacks to the centre of the window.
int conv_time_offset(const ConvSpec& spec);

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  bool has_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  Tensor& ensure_grad() {
    if (!has_grad) {
      grad = Tensor::zeros(value.shape);
      has_grad = true;
    }
    return grad;
  }
  void zero_grad() {
    if (has_grad)
      for (double& g : grad.v) g = 0.0;
  }
};

using NodePtr = std::shared_ptr<Node>;

// Handle to one node of the computation graph.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr n) : n_(std::move(n)) {}

  bool defined() const { return static_cast<bool>(n_); }
  // pointer semantics: a const handle still exposes the mutable payload
  Tensor& value() const { return n_->value; }
  const Tensor& grad() const;
  bool has_grad() const { return n_->has_grad; }
  bool requires_grad() const { return n_->requires_grad; }
  const Shape& shape() const { return n_->value.shape; }
  NodePtr node() const { return n_; }
  void zero_grad() { n_->zero_grad(); }

 private:
  NodePtr n_;
};

Var leaf(Tensor t, bool requires_grad = false);

// [T,F,Cin] * [kt,kf,Cin,Cout] -> [Tout,Fout,Cout]
Var conv2d(const Var& input, const Var& weights, const ConvSpec& spec);
// x [.., C] + bias [C], broadcast over leading axes
Var bias_add(const Var& x, const Var& bias);
// input [N,I] * weights [I,O] + bias [O]
Var affine(const Var& input, const Var& weights, const Var& bias);
// ids (each in [0,V)) gather rows of table [V,F] -> [T,F]
Var embedding_lookup(const std::vector<int>& ids, const Var& table);
// track [T] (or [T,1]) outer basis [F] (or [1,F]) -> [T,F]
Var scalar_expand(const Var& track, const Var& basis);
// feature-axis concatenation of [T,F,Ci] inputs
Var concat_features(const std::vector<Var>& inputs);
Var activation(const Var& x, Act kind);
Var add(const Var& a, const Var& b);
// elementwise scale*x + shift
Var affine_map(const Var& x, double scale, double shift);
// n frames of shape [F] -> [n,F,1]
Var stack_frames(const std::vector<Var>& frames);
// replicate [1,F,C] along time -> [T,F,C]
Var tile_time(const Var& x, int T);
Var reshape(const Var& x, Shape s);
// mean of squared differences over all elements -> scalar
Var mse_loss(const Var& pred, const Tensor& target);
Var sum_scalars(const std::vector<Var>& xs);
Var scale(const Var& x, double c);

// Reverse pass from a scalar root; accumulates into .grad of every node that
// requires gradients.
void backward(const Var& root);

}  // namespace envpred::ad
