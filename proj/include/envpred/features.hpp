#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "envpred/rng.hpp"
#include "envpred/tensor.hpp"

namespace envpred {

// ---- mel grid ---------------------------------------------------------------

double hz_to_mel(double hz);
double mel_to_hz(double mel);

struct MelGrid {
  int n_bins = 60;
  double f_max = 8000.0;
  std::vector<double> centers_hz;  // strictly ascending, equally spaced in mel
};

MelGrid mel_grid(int n_bins = 60, double f_max = 8000.0);

// ---- frame-synchronous feature tracks ---------------------------------------

// Four time-aligned tracks at a fixed 200 Hz frame rate: log-amplitude
// envelope bins (dB), phoneme ids, f0 (Hz, strictly positive) and loudness.
struct FeatureSequence {
  Tensor envelopes;  // [T, n_bins] dB
  std::vector<int32_t> phonemes;
  std::vector<double> f0;
  std::vector<double> loudness;
  int32_t vocab = 0;

  static constexpr double kFrameRateHz = 200.0;

  int length() const { return envelopes.rank() == 2 ? envelopes.dim(0) : 0; }
  int n_bins() const { return envelopes.rank() == 2 ? envelopes.dim(1) : 0; }
  void validate() const;  // throws on any invariant violation
};

// Binary ".fsq" codec: 8-byte magic, version, vocabulary size, one length per
// track, then the raw little-endian payloads in fixed order. Round-trips are
// bit-exact.
void write_feature_file(const FeatureSequence& seq, const std::string& path);
FeatureSequence read_feature_file(const std::string& path);

// Corpus manifest: plain text, one feature-file path per line (resolved
// relative to the manifest's directory).
void write_manifest(const std::vector<std::string>& paths, const std::string& manifest_path);
std::vector<FeatureSequence> read_corpus(const std::string& manifest_path);

// ---- synthetic singer -------------------------------------------------------

struct Formant {
  double center_bin = 30.0;
  double width_bins = 3.0;
  double height_db = 15.0;
};

struct ToySingerConfig {
  int vocab = 10;
  int n_bins = 60;
  std::vector<std::vector<Formant>> templates;  // one entry per phoneme, 2-3 formants
  double tilt_db_per_db = 0.15;
  double ripple_depth_db = 1.5;
  double ripple_hz_scale = 4000.0;  // ripple rate = f0 / this, cycles per bin
  int crossfade_frames = 8;
  int min_segment_frames = 24;
  int max_segment_frames = 60;
  double f0_base_hz = 220.0;
  uint64_t seed = 0;
};

// Config with deterministic per-phoneme formant templates drawn from the seed.
ToySingerConfig make_toy_config(uint64_t seed, int vocab = 10);

// Deterministic synthetic phrases: segment-structured phoneme track, smooth
// f0/loudness walks, and envelopes computed by toy_envelope_frame below.
std::vector<FeatureSequence> synth_corpus(const ToySingerConfig& cfg, int n_phrases, int phrase_len);

// The exact generator formula for one frame, recomputable from the control
// tracks alone: crossfaded formant templates + tilt * loudness + f0 ripple.
std::vector<double> toy_envelope_frame(const ToySingerConfig& cfg,
                                       const std::vector<int32_t>& phonemes, double f0_t,
                                       double loud_t, int t);

// ---- normalization ----------------------------------------------------------

struct NormStats {
  double env_mean = 0.0, env_sd = 1.0;
  double logf0_mean = 0.0, logf0_sd = 1.0;
  double loud_mean = 0.0, loud_sd = 1.0;
};

// Envelope statistics are shared across all bins; f0 statistics are taken on
// log-Hz. Throws when any track is constant.
NormStats compute_norm_stats(const std::vector<FeatureSequence>& corpus,
                             const std::vector<int>& phrase_ids);
NormStats compute_norm_stats(const std::vector<FeatureSequence>& corpus);

FeatureSequence apply_norm(const FeatureSequence& seq, const NormStats& st);
FeatureSequence invert_norm(const FeatureSequence& seq, const NormStats& st);

// ---- split and minibatch sampling -------------------------------------------

struct SplitIndices {
  std::vector<int> train, test;
};

// Deterministic 90/10 split by phrase-index hash; identical for every model.
SplitIndices split_corpus(int n_phrases);

struct Window {
  int phrase = -1;
  int start = 0;
  int span = 0;
};

// Uniform over all valid (phrase, start) positions among the given phrases.
std::vector<Window> sample_minibatch(const std::vector<FeatureSequence>& corpus,
                                     const std::vector<int>& phrase_ids, int batch, int span,
                                     Rng& rng);

}  // namespace envpred
