#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "envpred/autodiff.hpp"
#include "envpred/cgm.hpp"
#include "envpred/features.hpp"

namespace envpred {

enum class Variant { proposed, bb1, bb2 };
enum class Head { mse, cgm };

std::string variant_name(Variant v);
std::string head_name(Head h);
Variant parse_variant(const std::string& s);
Head parse_head(const std::string& s);

struct ModelConfig {
  int n_bins = 60;
  // time-stack depths; each branch consumes a window of 2^n frames
  int n_e = 4, n_ph = 6, n_f0 = 3, n_loud = 3;
  int freq_stacks = 3, layers_per_stack = 4;
  int growth = 16, bottleneck = 64, time_channels = 64;
  Head head = Head::mse;
  int cgm_k = 4;
  int vocab = 10;
  ad::Act time_act = ad::Act::gated;
  ad::Act freq_act = ad::Act::relu;
  int bb1_channels = 256, bb2_channels = 72;
  int cond_features = 2;  // control-encoding channels fed to the bb variants
  double sigma_min = 0.01;

  int env_window() const { return 1 << n_e; }
  int phoneme_window() const { return 1 << n_ph; }
  int f0_window() const { return 1 << n_f0; }
  int loud_window() const { return 1 << n_loud; }
  void validate() const;
};

struct BranchField {
  int past = 0;    // frames strictly before the predicted frame
  int future = 0;  // frames strictly after it
};

// Envelope history covers the 2^n_e preceding frames and nothing ahead;
// control windows of 2^n frames span [t - 2^(n-1), t + 2^(n-1) - 1].
struct ReceptiveField {
  BranchField envelope, phoneme, f0, loudness;
};

ReceptiveField receptive_field(const ModelConfig& cfg);
int past_extent(const ModelConfig& cfg);    // widest context needed before t
int future_extent(const ModelConfig& cfg);  // widest context needed after t

struct Param {
  std::string name;
  ad::Var var;
};

struct Model {
  ModelConfig cfg;
  Variant variant = Variant::proposed;
  std::vector<Param> params;
  NormStats norm;

  const ad::Var& param(const std::string& name) const;
  std::vector<ad::Var> param_vars() const;
  void zero_grads() const;
};

Model build_model(const ModelConfig& cfg, Variant variant, uint64_t seed);
Model clone_model(const Model& m);
int64_t param_count(const Model& m);

// Checkpoint = structured-text manifest (config, shapes, byte offsets) next to
// a raw little-endian float64 blob: <prefix>.manifest and <prefix>.blob.
void save_model(const Model& m, const std::string& path_prefix);
Model load_model(const std::string& path_prefix);

struct PredictionInput {
  Tensor env_history;            // [2^n_e, n_bins] normalized, newest frame last
  std::vector<int> phonemes;     // 2^n_ph ids around the predicted frame
  std::vector<double> f0;        // 2^n_f0 normalized log-Hz values
  std::vector<double> loudness;  // 2^n_loud normalized values
};

// Control windows for predicting frame t, clamped at phrase edges by
// replicating the first/last track values.
PredictionInput make_input(const FeatureSequence& seq, const NormStats& st,
                           const ModelConfig& cfg, int t);

// Full differentiable forward pass. env_frames are [n_bins] normalized history
// frames (newest last). Returns the normalized predicted frame for the mse
// head, or the raw [n_bins, 3K] mixture outputs for the cgm head.
ad::Var predict_raw(const Model& m, const std::vector<ad::Var>& env_frames,
                    const std::vector<int>& phonemes, const std::vector<double>& f0,
                    const std::vector<double>& loudness);

// Deterministic single-frame prediction in dB (cgm head collapses to the
// heaviest component's mean).
Tensor predict_frame(const Model& m, const PredictionInput& in);
// Mixture parameters in dB; valid for cgm-head models only.
CGMParams predict_cgm(const Model& m, const PredictionInput& in);

}  // namespace envpred
