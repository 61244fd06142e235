#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "envpred/adam.hpp"
#include "envpred/features.hpp"
#include "envpred/model.hpp"

namespace envpred {

enum class Regime { iterated, noise };

struct TrainConfig {
  Regime regime = Regime::iterated;
  int n_iter = 24;        // rollout length of the iterated regime
  double sigma_db = 12.0; // input-noise level of the noise regime, in dB
  int batch = 16;
  int64_t max_updates = 1000;
  int64_t eval_every = 100;  // 0 disables held-out evaluation
  uint64_t seed = 1;
  bool clip = true;
  double clip_norm = 5.0;
  AdamConfig adam{};
  std::string checkpoint_dir;  // empty disables checkpoints
  // held-out evaluation budget
  int eval_phrase_cap = 4;
  int eval_frame_stride = 4;
  int eval_drift_horizon = 32;
  int eval_drift_phrases = 2;
};

struct UpdateRecord {
  int64_t update = 0;  // 1-based
  double lr = 0.0;
  double loss = 0.0;
};

struct EvalRecord {
  int64_t update = 0;
  double tf_mse_db2 = 0.0;
  double drift_db = 0.0;  // mean free-run drift at the eval horizon
};

struct RunLog {
  std::vector<UpdateRecord> updates;
  std::vector<EvalRecord> evals;
};

void write_runlog(const RunLog& log, const std::string& path);

// Runs minibatch training over the deterministic train split of the corpus.
// The model is updated in place; its normalization statistics are set from
// the train split on construction. All randomness comes from cfg.seed, so a
// given (model seed, corpus, config) reproduces byte-identical logs and
// checkpoints. Chunked run() calls continue the same streams.
class Trainer {
 public:
  Trainer(Model& model, const std::vector<FeatureSequence>& corpus, TrainConfig cfg);

  // Runs up to n more updates (bounded by cfg.max_updates in total). Throws
  // on divergence; checkpoints already written stay on disk.
  void run(int64_t n);

  double step_iterated(const std::vector<Window>& batch, int n_iter);
  double step_noise(const std::vector<Window>& batch, double sigma_db);

  std::vector<Window> next_batch();
  int window_span() const { return span_; }

  const RunLog& log() const { return log_; }
  int64_t updates_done() const { return state_.step; }
  double last_eval_tf() const;
  const std::vector<int>& train_phrases() const { return split_.train; }
  const std::vector<int>& test_phrases() const { return split_.test; }
  std::vector<int> sampled_phrases() const;  // sorted unique phrase ids seen so far

 private:
  double step(const std::vector<Window>& batch);
  void evaluate(int64_t update);
  void apply_update(const std::vector<ad::Var>& params, double loss);

  Model& model_;
  const std::vector<FeatureSequence>& corpus_;
  TrainConfig cfg_;
  SplitIndices split_;
  int span_ = 0;
  int n_targets_ = 1;
  Rng sample_rng_, noise_rng_;
  AdamState state_;
  RunLog log_;
  std::set<int> sampled_;
};

// Convenience wrapper: trains for cfg.max_updates and returns the log.
RunLog train(Model& model, const std::vector<FeatureSequence>& corpus, const TrainConfig& cfg);

}  // namespace envpred
