#pragma once

#include "envpred/autodiff.hpp"
#include "envpred/rng.hpp"
#include "envpred/tensor.hpp"

namespace envpred {

// Per-bin Gaussian mixture over envelope amplitudes. Raw head outputs are
// laid out [bins, 3K]: K weight logits, K mean offsets from the previous
// frame, K log-scales. Scales are sigma_min + exp(log_scale), so they stay
// above the floor.
struct CGMParams {
  int n_bins = 0, K = 0;
  std::vector<double> weights;  // [bins*K], normalized per bin
  std::vector<double> means;    // [bins*K]
  std::vector<double> sigmas;   // [bins*K], >= sigma_min
  double sigma_min = 0.01;
};

CGMParams cgm_params_from_raw(const Tensor& raw, const Tensor& prev, double sigma_min = 0.01);

// Temperature-controlled draw. tau scales both the component choice (weights
// sharpened by the 1/tau power) and the component spread (sd tau*sigma). At
// tau = 0 the draw collapses to the mean of the heaviest component and the
// rng is not consumed.
Tensor cgm_sample(const CGMParams& params, double tau, Rng& rng);

// Mean negative log-likelihood over bins, differentiable in the raw head
// outputs and the previous frame. Stabilized with log-sum-exp.
ad::Var cgm_nll(const ad::Var& raw, const ad::Var& prev, const Tensor& target,
                double sigma_min = 0.01);

// Mixture expectation per bin (= prev + sum_k w_k * offset_k), the
// differentiable feedback frame for iterated rollouts.
ad::Var cgm_mixture_mean(const ad::Var& raw, const ad::Var& prev);

}  // namespace envpred
