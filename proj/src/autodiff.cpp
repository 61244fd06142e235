#include "envpred/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "envpred/kernels.hpp"

namespace envpred::ad {

namespace {

NodePtr make_node(Tensor value, std::vector<NodePtr> parents) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  return n;
}

kernels::ConvDims dims_for(const Tensor& input, const ConvSpec& spec) {
  return kernels::make_conv_dims(input.dim(0), input.dim(1), input.dim(2), spec.kt, spec.kf,
                                 spec.dt, spec.df, spec.padding == Padding::same_frequency,
                                 spec.out_features);
}

}  // namespace

const Tensor& Var::grad() const {
  if (!n_->has_grad) throw std::runtime_error("gradient not computed for this node");
  return n_->grad;
}

int conv_time_offset(const ConvSpec& spec) {
  const int span = spec.dt * (spec.kt - 1);
  switch (spec.alignment) {
    case Alignment::causal_time: return span;
    case Alignment::symmetric_time: return (span + 1) / 2;
    case Alignment::not_applicable: return 0;
  }
  return 0;
}

Var leaf(Tensor t, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = requires_grad;
  return Var(n);
}

Var conv2d(const Var& input, const Var& weights, const ConvSpec& spec) {
  const Tensor& x = input.value();
  const Tensor& w = weights.value();
  if (x.rank() != 3) throw std::invalid_argument("conv2d input must be [T,F,C], got " + shape_str(x.shape));
  if (w.shape != Shape{spec.kt, spec.kf, spec.in_features, spec.out_features})
    throw std::invalid_argument("conv2d weights " + shape_str(w.shape) + " do not match spec");
  if (x.dim(2) != spec.in_features)
    throw std::invalid_argument("conv2d input features " + std::to_string(x.dim(2)) +
                                " != spec in_features " + std::to_string(spec.in_features));
  kernels::ConvDims d = dims_for(x, spec);

  Tensor out({d.Tout, d.Fout, d.Cout});
  kernels::conv2d_forward(x.data(), w.data(), out.data(), d);

  auto n = make_node(std::move(out), {input.node(), weights.node()});
  if (n->requires_grad) {
    NodePtr xin = input.node(), win = weights.node();
    n->backprop = [xin, win, d](Node& self) {
      if (xin->requires_grad)
        kernels::conv2d_grad_input(self.grad.data(), win->value.data(), xin->ensure_grad().data(), d);
      if (win->requires_grad)
        kernels::conv2d_grad_weights(xin->value.data(), self.grad.data(), win->ensure_grad().data(), d);
    };
  }
  return Var(n);
}

Var bias_add(const Var& x, const Var& bias) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (bv.rank() != 1 || bv.dim(0) != xv.shape.back())
    throw std::invalid_argument("bias " + shape_str(bv.shape) + " does not match trailing axis of " +
                                shape_str(xv.shape));
  const int C = bv.dim(0);
  const int64_t rows = xv.size() / C;
  Tensor out(xv.shape);
  for (int64_t r = 0; r < rows; ++r)
    for (int c = 0; c < C; ++c) out.v[r * C + c] = xv.v[r * C + c] + bv.v[c];

  auto n = make_node(std::move(out), {x.node(), bias.node()});
  if (n->requires_grad) {
    NodePtr xn = x.node(), bn = bias.node();
    n->backprop = [xn, bn, rows, C](Node& self) {
      if (xn->requires_grad) {
        Tensor& gx = xn->ensure_grad();
        for (int64_t i = 0; i < self.grad.size(); ++i) gx.v[i] += self.grad.v[i];
      }
      if (bn->requires_grad) {
        Tensor& gb = bn->ensure_grad();
        for (int64_t r = 0; r < rows; ++r)
          for (int c = 0; c < C; ++c) gb.v[c] += self.grad.v[r * C + c];
      }
    };
  }
  return Var(n);
}

Var affine(const Var& input, const Var& weights, const Var& bias) {
  const Tensor& a = input.value();
  const Tensor& w = weights.value();
  const Tensor& b = bias.value();
  if (a.rank() < 2 || w.rank() != 2)
    throw std::invalid_argument("affine expects input [..,I] and weights [I,O]");
  const int I = a.shape.back();
  if (w.dim(0) != I)
    throw std::invalid_argument("affine inner dimensions disagree: input " + shape_str(a.shape) +
                                " vs weights " + shape_str(w.shape));
  const int O = w.dim(1);
  if (b.rank() != 1 || b.dim(0) != O)
    throw std::invalid_argument("affine bias must be [O]");
  const int N = static_cast<int>(a.size() / I);

  Shape out_shape = a.shape;
  out_shape.back() = O;
  Tensor out(out_shape);
  kernels::matmul(a.data(), w.data(), out.data(), N, I, O);
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < O; ++o) out.v[static_cast<int64_t>(n) * O + o] += b.v[o];

  auto node = make_node(std::move(out), {input.node(), weights.node(), bias.node()});
  if (node->requires_grad) {
    NodePtr an = input.node(), wn = weights.node(), bn = bias.node();
    node->backprop = [an, wn, bn, N, I, O](Node& self) {
      if (an->requires_grad)
        kernels::matmul_acc_a(self.grad.data(), wn->value.data(), an->ensure_grad().data(), N, I, O);
      if (wn->requires_grad)
        kernels::matmul_acc_w(an->value.data(), self.grad.data(), wn->ensure_grad().data(), N, I, O);
      if (bn->requires_grad) {
        Tensor& gb = bn->ensure_grad();
        for (int n = 0; n < N; ++n)
          for (int o = 0; o < O; ++o) gb.v[o] += self.grad.v[static_cast<int64_t>(n) * O + o];
      }
    };
  }
  return Var(node);
}

Var embedding_lookup(const std::vector<int>& ids, const Var& table) {
  const Tensor& tab = table.value();
  if (tab.rank() != 2) throw std::invalid_argument("embedding table must be [V,F]");
  const int V = tab.dim(0), F = tab.dim(1);
  for (size_t i = 0; i < ids.size(); ++i)
    if (ids[i] < 0 || ids[i] >= V)
      throw std::invalid_argument("embedding id " + std::to_string(ids[i]) + " at position " +
                                  std::to_string(i) + " out of range [0," + std::to_string(V) + ")");
  const int T = static_cast<int>(ids.size());
  Tensor out({T, F});
  for (int t = 0; t < T; ++t)
    for (int f = 0; f < F; ++f) out.at2(t, f) = tab.at2(ids[t], f);

  auto n = make_node(std::move(out), {table.node()});
  if (n->requires_grad) {
    NodePtr tn = table.node();
    std::vector<int> ids_copy = ids;
    n->backprop = [tn, ids_copy, F](Node& self) {
      Tensor& gt = tn->ensure_grad();
      for (size_t t = 0; t < ids_copy.size(); ++t)
        for (int f = 0; f < F; ++f) gt.at2(ids_copy[t], f) += self.grad.v[t * F + f];
    };
  }
  return Var(n);
}

Var scalar_expand(const Var& track, const Var& basis) {
  const Tensor& tr = track.value();
  const Tensor& ba = basis.value();
  const int64_t T = tr.size(), F = ba.size();
  Tensor out({static_cast<int>(T), static_cast<int>(F)});
  for (int64_t t = 0; t < T; ++t)
    for (int64_t f = 0; f < F; ++f) out.v[t * F + f] = tr.v[t] * ba.v[f];

  auto n = make_node(std::move(out), {track.node(), basis.node()});
  if (n->requires_grad) {
    NodePtr tn = track.node(), bn = basis.node();
    n->backprop = [tn, bn, T, F](Node& self) {
      if (tn->requires_grad) {
        Tensor& gt = tn->ensure_grad();
        for (int64_t t = 0; t < T; ++t) {
          double acc = 0.0;
          for (int64_t f = 0; f < F; ++f) acc += self.grad.v[t * F + f] * bn->value.v[f];
          gt.v[t] += acc;
        }
      }
      if (bn->requires_grad) {
        Tensor& gb = bn->ensure_grad();
        for (int64_t f = 0; f < F; ++f) {
          double acc = 0.0;
          for (int64_t t = 0; t < T; ++t) acc += self.grad.v[t * F + f] * tn->value.v[t];
          gb.v[f] += acc;
        }
      }
    };
  }
  return Var(n);
}

Var concat_features(const std::vector<Var>& inputs) {
  if (inputs.empty()) throw std::invalid_argument("concat_features needs at least one input");
  const Tensor& first = inputs[0].value();
  if (first.rank() != 3) throw std::invalid_argument("concat_features inputs must be [T,F,C]");
  const int T = first.dim(0), F = first.dim(1);
  int Ctot = 0;
  for (const Var& in : inputs) {
    const Tensor& t = in.value();
    if (t.rank() != 3 || t.dim(0) != T || t.dim(1) != F)
      throw std::invalid_argument("concat_features extent mismatch: " + shape_str(t.shape) +
                                  " vs " + shape_str(first.shape));
    Ctot += t.dim(2);
  }
  Tensor out({T, F, Ctot});
  int off = 0;
  for (const Var& in : inputs) {
    const Tensor& t = in.value();
    const int C = t.dim(2);
    for (int i = 0; i < T * F; ++i)
      for (int c = 0; c < C; ++c)
        out.v[static_cast<int64_t>(i) * Ctot + off + c] = t.v[static_cast<int64_t>(i) * C + c];
    off += C;
  }

  std::vector<NodePtr> parents;
  for (const Var& in : inputs) parents.push_back(in.node());
  auto n = make_node(std::move(out), parents);
  if (n->requires_grad) {
    std::vector<NodePtr> srcs = n->parents;
    n->backprop = [srcs, T, F, Ctot](Node& self) {
      int off = 0;
      for (const NodePtr& s : srcs) {
        const int C = s->value.dim(2);
        if (s->requires_grad) {
          Tensor& g = s->ensure_grad();
          for (int i = 0; i < T * F; ++i)
            for (int c = 0; c < C; ++c)
              g.v[static_cast<int64_t>(i) * C + c] += self.grad.v[static_cast<int64_t>(i) * Ctot + off + c];
        }
        off += C;
      }
    };
  }
  return Var(n);
}

Var activation(const Var& x, Act kind) {
  const Tensor& xv = x.value();
  if (kind == Act::gated) {
    const int C = xv.shape.back();
    if (C % 2 != 0)
      throw std::invalid_argument("gated activation needs an even feature count, got " + std::to_string(C));
    const int H = C / 2;
    const int64_t rows = xv.size() / C;
    Shape out_shape = xv.shape;
    out_shape.back() = H;
    Tensor out(out_shape);
    for (int64_t r = 0; r < rows; ++r) {
      const double* row = xv.data() + r * C;
      double* orow = out.data() + r * H;
      for (int h = 0; h < H; ++h) {
        const double ta = std::tanh(row[h]);
        const double sb = 1.0 / (1.0 + std::exp(-row[H + h]));
        orow[h] = ta * sb;
      }
    }
    auto n = make_node(std::move(out), {x.node()});
    if (n->requires_grad) {
      NodePtr xn = x.node();
      n->backprop = [xn, rows, C, H](Node& self) {
        Tensor& gx = xn->ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
          const double* row = xn->value.data() + r * C;
          double* grow = gx.data() + r * C;
          const double* go = self.grad.data() + r * H;
          for (int h = 0; h < H; ++h) {
            const double ta = std::tanh(row[h]);
            const double sb = 1.0 / (1.0 + std::exp(-row[H + h]));
            grow[h] += go[h] * (1.0 - ta * ta) * sb;
            grow[H + h] += go[h] * ta * sb * (1.0 - sb);
          }
        }
      };
    }
    return Var(n);
  }

  Tensor out(xv.shape);
  if (kind == Act::relu) {
    for (int64_t i = 0; i < xv.size(); ++i) out.v[i] = xv.v[i] > 0.0 ? xv.v[i] : 0.0;
  } else {
    for (int64_t i = 0; i < xv.size(); ++i) out.v[i] = std::tanh(xv.v[i]);
  }
  auto n = make_node(std::move(out), {x.node()});
  if (n->requires_grad) {
    NodePtr xn = x.node();
    n->backprop = [xn, kind](Node& self) {
      Tensor& gx = xn->ensure_grad();
      if (kind == Act::relu) {
        for (int64_t i = 0; i < self.grad.size(); ++i)
          if (xn->value.v[i] > 0.0) gx.v[i] += self.grad.v[i];
      } else {
        for (int64_t i = 0; i < self.grad.size(); ++i) {
          const double y = self.value.v[i];
          gx.v[i] += self.grad.v[i] * (1.0 - y * y);
        }
      }
    };
  }
  return Var(n);
}

Var add(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv))
    throw std::invalid_argument("add shape mismatch: " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
  Tensor out(av.shape);
  for (int64_t i = 0; i < av.size(); ++i) out.v[i] = av.v[i] + bv.v[i];
  auto n = make_node(std::move(out), {a.node(), b.node()});
  if (n->requires_grad) {
    NodePtr an = a.node(), bn = b.node();
    n->backprop = [an, bn](Node& self) {
      if (an->requires_grad) {
        Tensor& g = an->ensure_grad();
        for (int64_t i = 0; i < self.grad.size(); ++i) g.v[i] += self.grad.v[i];
      }
      if (bn->requires_grad) {
        Tensor& g = bn->ensure_grad();
        for (int64_t i = 0; i < self.grad.size(); ++i) g.v[i] += self.grad.v[i];
      }
    };
  }
  return Var(n);
}

Var affine_map(const Var& x, double scale, double shift) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape);
  for (int64_t i = 0; i < xv.size(); ++i) out.v[i] = scale * xv.v[i] + shift;
  auto n = make_node(std::move(out), {x.node()});
  if (n->requires_grad) {
    NodePtr xn = x.node();
    n->backprop = [xn, scale](Node& self) {
      Tensor& g = xn->ensure_grad();
      for (int64_t i = 0; i < self.grad.size(); ++i) g.v[i] += scale * self.grad.v[i];
    };
  }
  return Var(n);
}

Var stack_frames(const std::vector<Var>& frames) {
  if (frames.empty()) throw std::invalid_argument("stack_frames needs at least one frame");
  const int F = static_cast<int>(frames[0].value().size());
  const int T = static_cast<int>(frames.size());
  Tensor out({T, F, 1});
  for (int t = 0; t < T; ++t) {
    const Tensor& fr = frames[t].value();
    if (fr.size() != F)
      throw std::invalid_argument("stack_frames frame " + std::to_string(t) + " has mismatched size");
    for (int f = 0; f < F; ++f) out.v[static_cast<int64_t>(t) * F + f] = fr.v[f];
  }
  std::vector<NodePtr> parents;
  for (const Var& fr : frames) parents.push_back(fr.node());
  auto n = make_node(std::move(out), parents);
  if (n->requires_grad) {
    std::vector<NodePtr> srcs = n->parents;
    n->backprop = [srcs, F](Node& self) {
      for (size_t t = 0; t < srcs.size(); ++t) {
        if (!srcs[t]->requires_grad) continue;
        Tensor& g = srcs[t]->ensure_grad();
        for (int f = 0; f < F; ++f) g.v[f] += self.grad.v[t * F + f];
      }
    };
  }
  return Var(n);
}

Var tile_time(const Var& x, int T) {
  const Tensor& xv = x.value();
  if (xv.rank() != 3 || xv.dim(0) != 1)
    throw std::invalid_argument("tile_time expects [1,F,C], got " + shape_str(xv.shape));
  const int F = xv.dim(1), C = xv.dim(2);
  Tensor out({T, F, C});
  for (int t = 0; t < T; ++t)
    for (int64_t i = 0; i < static_cast<int64_t>(F) * C; ++i)
      out.v[static_cast<int64_t>(t) * F * C + i] = xv.v[i];
  auto n = make_node(std::move(out), {x.node()});
  if (n->requires_grad) {
    NodePtr xn = x.node();
    n->backprop = [xn, T, F, C](Node& self) {
      Tensor& g = xn->ensure_grad();
      for (int t = 0; t < T; ++t)
        for (int64_t i = 0; i < static_cast<int64_t>(F) * C; ++i)
          g.v[i] += self.grad.v[static_cast<int64_t>(t) * F * C + i];
    };
  }
  return Var(n);
}

Var reshape(const Var& x, Shape s) {
  const Tensor& xv = x.value();
  if (shape_numel(s) != xv.size())
    throw std::invalid_argument("reshape " + shape_str(xv.shape) + " -> " + shape_str(s) +
                                " changes element count");
  Tensor out(s, xv.v);
  auto n = make_node(std::move(out), {x.node()});
  if (n->requires_grad) {
    NodePtr xn = x.node();
    n->backprop = [xn](Node& self) {
      Tensor& g = xn->ensure_grad();
      for (int64_t i = 0; i < self.grad.size(); ++i) g.v[i] += self.grad.v[i];
    };
  }
  return Var(n);
}

Var mse_loss(const Var& pred, const Tensor& target) {
  const Tensor& p = pred.value();
  if (!p.same_shape(target))
    throw std::invalid_argument("mse_loss shape mismatch: " + shape_str(p.shape) + " vs " +
                                shape_str(target.shape));
  const int64_t N = p.size();
  double acc = 0.0;
  for (int64_t i = 0; i < N; ++i) {
    const double d = p.v[i] - target.v[i];
    acc += d * d;
  }
  Tensor out = Tensor::scalar(acc / static_cast<double>(N));
  auto n = make_node(std::move(out), {pred.node()});
  if (n->requires_grad) {
    NodePtr pn = pred.node();
    Tensor tgt = target;
    n->backprop = [pn, tgt, N](Node& self) {
      Tensor& g = pn->ensure_grad();
      const double go = self.grad.v[0];
      for (int64_t i = 0; i < N; ++i)
        g.v[i] += go * 2.0 * (pn->value.v[i] - tgt.v[i]) / static_cast<double>(N);
    };
  }
  return Var(n);
}

Var sum_scalars(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("sum_scalars needs at least one term");
  double acc = 0.0;
  for (const Var& x : xs) {
    if (x.value().size() != 1) throw std::invalid_argument("sum_scalars terms must be scalars");
    acc += x.value().v[0];
  }
  std::vector<NodePtr> parents;
  for (const Var& x : xs) parents.push_back(x.node());
  auto n = make_node(Tensor::scalar(acc), parents);
  if (n->requires_grad) {
    std::vector<NodePtr> srcs = n->parents;
    n->backprop = [srcs](Node& self) {
      for (const NodePtr& s : srcs)
        if (s->requires_grad) s->ensure_grad().v[0] += self.grad.v[0];
    };
  }
  return Var(n);
}

Var scale(const Var& x, double c) { return affine_map(x, c, 0.0); }

void backward(const Var& root) {
  if (!root.defined() || root.value().size() != 1)
    throw std::invalid_argument("backward root must be a defined scalar");
  if (!root.node()->requires_grad) return;

  // iterative DFS post-order over parents
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* n;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({root.node().get(), 0});
  visited.insert(root.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.n->parents.size()) {
      Node* p = f.n->parents[f.next_parent++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  root.node()->ensure_grad().v[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && n->has_grad) n->backprop(*n);
  }
}

}  // namespace envpred::ad
