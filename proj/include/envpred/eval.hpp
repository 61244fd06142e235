#pragma once

#include <functional>
#include <vector>

#include "envpred/features.hpp"
#include "envpred/model.hpp"

namespace envpred {

struct GenerationRequest {
  const Model* model = nullptr;
  std::vector<int32_t> phonemes;  // length T control tracks
  std::vector<double> f0;
  std::vector<double> loudness;
  Tensor seed_env;       // [2^n_e, n_bins] ground-truth frames in dB
  double tau = 0.0;      // cgm head only
  uint64_t rng_seed = 0;
};

// Free-run generation: the first 2^n_e frames are the seeds (bit-exact), each
// later frame is predicted from the growing history. Deterministic for the
// mse head and at tau = 0.
Tensor generate(const GenerationRequest& req);  // [T, n_bins] dB

// Same loop driven by an arbitrary frame function (dB history in, dB frame
// out); lets tests run reference predictors through identical plumbing.
using FrameFn = std::function<Tensor(int t, const Tensor& history_db)>;
Tensor generate_with(const FrameFn& fn, int T, const Tensor& seed_env_db);

struct EvalOptions {
  int phrase_cap = 0;    // 0 = all phrases
  int frame_stride = 1;  // evaluate every k-th frame
};

// Mean per-frame MSE in dB^2 with ground-truth histories, averaged over
// phrases in index order.
double eval_teacher_forced(const Model& m, const std::vector<FeatureSequence>& corpus,
                           const std::vector<int>& phrase_ids, const EvalOptions& opt = {});

// Mean absolute error in dB per free-run horizon step, averaged over phrases
// and bins; curve[0] = 0 by construction (seeded with ground truth).
std::vector<double> free_run_drift(const Model& m, const std::vector<FeatureSequence>& corpus,
                                   const std::vector<int>& phrase_ids, int horizon);

// Reference bar: MSE in dB^2 of predicting each frame as its predecessor,
// over the same frames a model with first_frame seed frames would score.
double repeat_prev_baseline(const std::vector<FeatureSequence>& corpus,
                            const std::vector<int>& phrase_ids, const EvalOptions& opt = {},
                            int first_frame = 16);

struct EvalReport {
  std::vector<std::pair<int, double>> per_phrase_mse_db2;
  double mean_mse_db2 = 0.0;
  double baseline_mse_db2 = 0.0;
  std::vector<double> drift_db;
};

EvalReport evaluate_model(const Model& m, const std::vector<FeatureSequence>& corpus,
                          const std::vector<int>& phrase_ids, int drift_horizon,
                          const EvalOptions& opt = {});

}  // namespace envpred
