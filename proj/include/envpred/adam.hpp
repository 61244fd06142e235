#pragma once

#include <cstdint>
#include <vector>

#include "envpred/autodiff.hpp"

namespace envpred {

struct AdamConfig {
  double base_lr = 5e-4;
  double decay = 1e-5;  // multiplicative learning-rate decay per update
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second-moment state for one fixed parameter list. Moments are kept in
// list order, so the caller must always pass the same parameters.
struct AdamState {
  AdamConfig cfg;
  int64_t step = 0;  // completed updates
  std::vector<Tensor> m, v;

  void init(const std::vector<ad::Var>& params);
  double lr() const;  // effective learning rate of the NEXT update
};

// One Adam update from the gradients currently stored on the parameters.
// Rejects the whole update (throws, state untouched) when any gradient is
// non-finite. Parameters with no accumulated gradient are treated as zero.
void adam_step(std::vector<ad::Var>& params, AdamState& state);

}  // namespace envpred
