#include "envpred/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace envpred {

void AdamState::init(const std::vector<ad::Var>& params) {
  m.clear();
  v.clear();
  for (const ad::Var& p : params) {
    m.push_back(Tensor::zeros(p.shape()));
    v.push_back(Tensor::zeros(p.shape()));
  }
  step = 0;
}

double AdamState::lr() const { return cfg.base_lr * std::pow(1.0 - cfg.decay, static_cast<double>(step)); }

void adam_step(std::vector<ad::Var>& params, AdamState& state) {
  if (params.size() != state.m.size())
    throw std::invalid_argument("adam state tracks " + std::to_string(state.m.size()) +
                                " parameters, got " + std::to_string(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != state.m[i].shape)
      throw std::invalid_argument("adam state shape mismatch for parameter " + std::to_string(i));
    if (params[i].has_grad() && !params[i].grad().all_finite())
      throw std::runtime_error("update rejected: non-finite gradient in parameter " + std::to_string(i));
  }

  const double lr_t = state.lr();
  const double b1 = state.cfg.beta1, b2 = state.cfg.beta2, eps = state.cfg.epsilon;
  const double t = static_cast<double>(state.step + 1);
  const double bc1 = 1.0 - std::pow(b1, t);
  const double bc2 = 1.0 - std::pow(b2, t);

  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& value = params[i].value();
    Tensor& mi = state.m[i];
    Tensor& vi = state.v[i];
    const bool has_g = params[i].has_grad();
    const Tensor* g = has_g ? &params[i].grad() : nullptr;
    for (int64_t j = 0; j < value.size(); ++j) {
      const double gj = has_g ? g->v[j] : 0.0;
      mi.v[j] = b1 * mi.v[j] + (1.0 - b1) * gj;
      vi.v[j] = b2 * vi.v[j] + (1.0 - b2) * gj * gj;
      const double mhat = mi.v[j] / bc1;
      const double vhat = vi.v[j] / bc2;
      value.v[j] -= lr_t * mhat / (std::sqrt(vhat) + eps);
    }
  }
  ++state.step;
}

}  // namespace envpred
