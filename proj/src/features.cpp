#include "envpred/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace envpred {

namespace fs = std::filesystem;

// ---- mel grid ---------------------------------------------------------------

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelGrid mel_grid(int n_bins, double f_max) {
  if (n_bins < 2) throw std::invalid_argument("mel grid needs at least 2 bins");
  if (f_max <= 0.0) throw std::invalid_argument("mel grid f_max must be positive");
  MelGrid g;
  g.n_bins = n_bins;
  g.f_max = f_max;
  const double mel_max = hz_to_mel(f_max);
  g.centers_hz.resize(n_bins);
  for (int i = 0; i < n_bins; ++i)
    g.centers_hz[i] = mel_to_hz(mel_max * static_cast<double>(i) / (n_bins - 1));
  g.centers_hz.back() = std::min(g.centers_hz.back(), f_max);
  return g;
}

// ---- FeatureSequence --------------------------------------------------------

void FeatureSequence::validate() const {
  if (envelopes.rank() != 2) throw std::runtime_error("envelope track must be [T,bins]");
  const size_t T = static_cast<size_t>(length());
  if (phonemes.size() != T || f0.size() != T || loudness.size() != T)
    throw std::runtime_error("track length mismatch: envelopes " + std::to_string(T) +
                             ", phonemes " + std::to_string(phonemes.size()) + ", f0 " +
                             std::to_string(f0.size()) + ", loudness " +
                             std::to_string(loudness.size()));
  if (!envelopes.all_finite()) throw std::runtime_error("non-finite envelope values");
  for (double x : f0)
    if (!(x > 0.0) || !std::isfinite(x)) throw std::runtime_error("f0 must be finite and > 0 everywhere");
  for (double x : loudness)
    if (!std::isfinite(x)) throw std::runtime_error("non-finite loudness values");
  for (int32_t p : phonemes)
    if (p < 0 || p >= vocab) throw std::runtime_error("phoneme id out of vocabulary range");
}

// ---- binary codec -----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'E', 'N', 'V', 'P', 'F', 'S', 'Q', '1'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& x) {
  os.write(reinterpret_cast<const char*>(&x), sizeof(T));
}

template <typename T>
T get(std::istream& is, const char* what) {
  T x{};
  is.read(reinterpret_cast<char*>(&x), sizeof(T));
  if (!is) throw std::runtime_error(std::string("truncated feature file while reading ") + what);
  return x;
}

void put_doubles(std::ostream& os, const double* p, size_t n) {
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

void get_doubles(std::istream& is, double* p, size_t n, const char* what) {
  is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw std::runtime_error(std::string("truncated feature file while reading ") + what);
}

}  // namespace

void write_feature_file(const FeatureSequence& seq, const std::string& path) {
  static_assert(std::endian::native == std::endian::little, "file format is little-endian");
  seq.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write(kMagic, sizeof(kMagic));
  put(os, kVersion);
  put(os, static_cast<uint32_t>(seq.vocab));
  put(os, static_cast<uint32_t>(seq.n_bins()));
  const uint64_t T = static_cast<uint64_t>(seq.length());
  put(os, T);  // envelope frames
  put(os, static_cast<uint64_t>(seq.phonemes.size()));
  put(os, static_cast<uint64_t>(seq.f0.size()));
  put(os, static_cast<uint64_t>(seq.loudness.size()));
  put_doubles(os, seq.envelopes.data(), seq.envelopes.v.size());
  os.write(reinterpret_cast<const char*>(seq.phonemes.data()),
           static_cast<std::streamsize>(seq.phonemes.size() * sizeof(int32_t)));
  put_doubles(os, seq.f0.data(), seq.f0.size());
  put_doubles(os, seq.loudness.data(), seq.loudness.size());
  if (!os) throw std::runtime_error("write failed for " + path);
}

FeatureSequence read_feature_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("bad magic in " + path);
  const uint32_t version = get<uint32_t>(is, "version");
  if (version != kVersion)
    throw std::runtime_error("unsupported feature file version " + std::to_string(version));
  const uint32_t vocab = get<uint32_t>(is, "vocab");
  const uint32_t bins = get<uint32_t>(is, "bins");
  const uint64_t t_env = get<uint64_t>(is, "envelope length");
  const uint64_t t_ph = get<uint64_t>(is, "phoneme length");
  const uint64_t t_f0 = get<uint64_t>(is, "f0 length");
  const uint64_t t_ld = get<uint64_t>(is, "loudness length");
  if (!(t_env == t_ph && t_env == t_f0 && t_env == t_ld))
    throw std::runtime_error("track length mismatch in " + path + ": env " + std::to_string(t_env) +
                             ", phonemes " + std::to_string(t_ph) + ", f0 " + std::to_string(t_f0) +
                             ", loudness " + std::to_string(t_ld));
  if (bins == 0 || t_env == 0) throw std::runtime_error("empty feature file " + path);

  FeatureSequence seq;
  seq.vocab = static_cast<int32_t>(vocab);
  seq.envelopes = Tensor({static_cast<int>(t_env), static_cast<int>(bins)});
  get_doubles(is, seq.envelopes.data(), seq.envelopes.v.size(), "envelopes");
  seq.phonemes.resize(t_ph);
  is.read(reinterpret_cast<char*>(seq.phonemes.data()),
          static_cast<std::streamsize>(t_ph * sizeof(int32_t)));
  if (!is) throw std::runtime_error("truncated feature file while reading phonemes");
  seq.f0.resize(t_f0);
  get_doubles(is, seq.f0.data(), t_f0, "f0");
  seq.loudness.resize(t_ld);
  get_doubles(is, seq.loudness.data(), t_ld, "loudness");
  seq.validate();
  return seq;
}

void write_manifest(const std::vector<std::string>& paths, const std::string& manifest_path) {
  std::ofstream os(manifest_path);
  if (!os) throw std::runtime_error("cannot open " + manifest_path + " for writing");
  for (const std::string& p : paths) os << p << "\n";
}

std::vector<FeatureSequence> read_corpus(const std::string& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw std::runtime_error("cannot open manifest " + manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  std::vector<FeatureSequence> corpus;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    fs::path p(line);
    if (p.is_relative()) p = base / p;
    corpus.push_back(read_feature_file(p.string()));
  }
  if (corpus.empty()) throw std::runtime_error("manifest " + manifest_path + " lists no feature files");
  return corpus;
}

// ---- synthetic singer -------------------------------------------------------

ToySingerConfig make_toy_config(uint64_t seed, int vocab) {
  ToySingerConfig cfg;
  cfg.vocab = vocab;
  cfg.seed = seed;
  Rng rng(splitmix64(seed ^ 0x70795f73696e6765ull));
  cfg.templates.resize(vocab);
  for (int p = 0; p < vocab; ++p) {
    const int n_formants = 2 + static_cast<int>(rng.uniform_int(2));
    for (int k = 0; k < n_formants; ++k) {
      Formant f;
      f.center_bin = rng.uniform(3.0, 55.0);
      f.width_bins = rng.uniform(1.5, 6.0);
      f.height_db = rng.uniform(6.0, 24.0);
      cfg.templates[p].push_back(f);
    }
  }
  return cfg;
}

namespace {

double template_value(const ToySingerConfig& cfg, int phoneme, int bin) {
  double acc = 0.0;
  for (const Formant& fo : cfg.templates[static_cast<size_t>(phoneme)]) {
    const double d = (bin - fo.center_bin) / fo.width_bins;
    acc += fo.height_db * std::exp(-0.5 * d * d);
  }
  return acc;
}

// Trapezoid crossfade weight of the segment [a, b) at frame t. Interior
// boundaries ramp linearly over cfg.crossfade_frames; the phrase edges do not
// fade. At a boundary frame the two neighbours weigh exactly 1/2 each.
double segment_weight(int t, int a, int b, int L, int phrase_len) {
  auto ramp = [L](double x) {
    const double y = x / static_cast<double>(L) + 0.5;
    return y < 0.0 ? 0.0 : (y > 1.0 ? 1.0 : y);
  };
  const double rise = (a <= 0) ? 1.0 : ramp(static_cast<double>(t - a));
  const double fall = (b >= phrase_len) ? 0.0 : ramp(static_cast<double>(t - b));
  return rise - fall;
}

struct Segment {
  int phoneme = 0;
  int start = 0, end = 0;  // [start, end)
};

std::vector<Segment> segments_from_track(const std::vector<int32_t>& ph) {
  std::vector<Segment> segs;
  int start = 0;
  for (size_t t = 1; t <= ph.size(); ++t) {
    if (t == ph.size() || ph[t] != ph[start]) {
      segs.push_back({ph[static_cast<size_t>(start)], start, static_cast<int>(t)});
      start = static_cast<int>(t);
    }
  }
  return segs;
}

}  // namespace

std::vector<double> toy_envelope_frame(const ToySingerConfig& cfg,
                                       const std::vector<int32_t>& phonemes, double f0_t,
                                       double loud_t, int t) {
  const int nb = cfg.n_bins;
  const int phrase_len = static_cast<int>(phonemes.size());
  std::vector<double> frame(static_cast<size_t>(nb), 0.0);
  const std::vector<Segment> segs = segments_from_track(phonemes);
  for (const Segment& s : segs) {
    const double w = segment_weight(t, s.start, s.end, cfg.crossfade_frames, phrase_len);
    if (w == 0.0) continue;
    for (int f = 0; f < nb; ++f) frame[static_cast<size_t>(f)] += w * template_value(cfg, s.phoneme, f);
  }
  const double half = (nb - 1) / 2.0;
  const double rate = f0_t / cfg.ripple_hz_scale;
  for (int f = 0; f < nb; ++f) {
    frame[static_cast<size_t>(f)] += cfg.tilt_db_per_db * loud_t * (f - half) / half;
    frame[static_cast<size_t>(f)] += cfg.ripple_depth_db * std::sin(6.283185307179586477 * f * rate);
  }
  return frame;
}

std::vector<FeatureSequence> synth_corpus(const ToySingerConfig& cfg, int n_phrases, int phrase_len) {
  if (n_phrases < 1) throw std::invalid_argument("synth_corpus needs n_phrases >= 1");
  if (cfg.crossfade_frames < 1) throw std::invalid_argument("crossfade length must be >= 1");
  if (cfg.templates.size() != static_cast<size_t>(cfg.vocab))
    throw std::invalid_argument("toy config needs one formant template per phoneme");
  for (const auto& tmpl : cfg.templates)
    for (const Formant& f : tmpl)
      if (f.center_bin < 0.0 || f.center_bin > cfg.n_bins - 1)
        throw std::invalid_argument("formant center outside bin range");
  const int min_seg = std::max(cfg.min_segment_frames, cfg.crossfade_frames + 2);

  std::vector<FeatureSequence> corpus;
  corpus.reserve(static_cast<size_t>(n_phrases));
  for (int pi = 0; pi < n_phrases; ++pi) {
    Rng rng(splitmix64(cfg.seed ^ splitmix64(0x9e3779b9u + static_cast<uint64_t>(pi))));
    FeatureSequence seq;
    seq.vocab = cfg.vocab;
    seq.phonemes.resize(static_cast<size_t>(phrase_len));

    // segment-structured phonemes, no repeated neighbours
    int t = 0;
    int prev = -1;
    while (t < phrase_len) {
      int p = static_cast<int>(rng.uniform_int(cfg.vocab));
      while (p == prev && cfg.vocab > 1) p = static_cast<int>(rng.uniform_int(cfg.vocab));
      const int dur = min_seg + static_cast<int>(rng.uniform_int(
                                    std::max<int64_t>(1, cfg.max_segment_frames - min_seg + 1)));
      for (int k = 0; k < dur && t < phrase_len; ++k, ++t) seq.phonemes[static_cast<size_t>(t)] = p;
      prev = p;
    }

    // piecewise-smooth control walks: per-segment targets with relaxation
    seq.f0.resize(static_cast<size_t>(phrase_len));
    seq.loudness.resize(static_cast<size_t>(phrase_len));
    const std::vector<Segment> segs = segments_from_track(seq.phonemes);
    std::vector<double> pitch_target(segs.size()), loud_target(segs.size());
    for (size_t s = 0; s < segs.size(); ++s) {
      pitch_target[s] = rng.uniform(-7.0, 7.0);   // semitones around the base pitch
      loud_target[s] = rng.uniform(-20.0, 0.0);   // dB
    }
    double pitch = pitch_target[0], loud = loud_target[0];
    size_t seg_idx = 0;
    for (int i = 0; i < phrase_len; ++i) {
      while (seg_idx + 1 < segs.size() && i >= segs[seg_idx].end) ++seg_idx;
      pitch += 0.06 * (pitch_target[seg_idx] - pitch);
      loud += 0.06 * (loud_target[seg_idx] - loud);
      seq.f0[static_cast<size_t>(i)] = cfg.f0_base_hz * std::pow(2.0, pitch / 12.0);
      seq.loudness[static_cast<size_t>(i)] = loud;
    }

    // envelopes from the generator formula
    seq.envelopes = Tensor({phrase_len, cfg.n_bins});
    for (int i = 0; i < phrase_len; ++i) {
      const std::vector<double> frame =
          toy_envelope_frame(cfg, seq.phonemes, seq.f0[static_cast<size_t>(i)],
                             seq.loudness[static_cast<size_t>(i)], i);
      for (int f = 0; f < cfg.n_bins; ++f) seq.envelopes.at2(i, f) = frame[static_cast<size_t>(f)];
    }
    seq.validate();
    corpus.push_back(std::move(seq));
  }
  return corpus;
}

// ---- normalization ----------------------------------------------------------

namespace {

struct Moments {
  double mean = 0.0, sd = 0.0;
  int64_t n = 0;
};

Moments moments_of(const std::vector<double>& xs) {
  Moments m;
  m.n = static_cast<int64_t>(xs.size());
  double acc = 0.0;
  for (double x : xs) acc += x;
  m.mean = acc / static_cast<double>(m.n);
  double var = 0.0;
  for (double x : xs) var += (x - m.mean) * (x - m.mean);
  m.sd = std::sqrt(var / static_cast<double>(m.n));
  return m;
}

}  // namespace

NormStats compute_norm_stats(const std::vector<FeatureSequence>& corpus,
                             const std::vector<int>& phrase_ids) {
  if (phrase_ids.empty()) throw std::invalid_argument("compute_norm_stats needs a nonempty corpus");
  std::vector<double> env, lf0, loud;
  for (int pi : phrase_ids) {
    const FeatureSequence& s = corpus[static_cast<size_t>(pi)];
    env.insert(env.end(), s.envelopes.v.begin(), s.envelopes.v.end());
    for (double x : s.f0) lf0.push_back(std::log(x));
    loud.insert(loud.end(), s.loudness.begin(), s.loudness.end());
  }
  const Moments me = moments_of(env), mf = moments_of(lf0), ml = moments_of(loud);
  if (me.sd <= 0.0) throw std::runtime_error("envelope track is constant; cannot normalize");
  if (mf.sd <= 0.0) throw std::runtime_error("f0 track is constant; cannot normalize");
  if (ml.sd <= 0.0) throw std::runtime_error("loudness track is constant; cannot normalize");
  NormStats st;
  st.env_mean = me.mean;
  st.env_sd = me.sd;
  st.logf0_mean = mf.mean;
  st.logf0_sd = mf.sd;
  st.loud_mean = ml.mean;
  st.loud_sd = ml.sd;
  return st;
}

NormStats compute_norm_stats(const std::vector<FeatureSequence>& corpus) {
  std::vector<int> ids(corpus.size());
  for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
  return compute_norm_stats(corpus, ids);
}

FeatureSequence apply_norm(const FeatureSequence& seq, const NormStats& st) {
  FeatureSequence out = seq;
  for (double& x : out.envelopes.v) x = (x - st.env_mean) / st.env_sd;
  for (double& x : out.f0) x = (std::log(x) - st.logf0_mean) / st.logf0_sd;
  for (double& x : out.loudness) x = (x - st.loud_mean) / st.loud_sd;
  return out;
}

FeatureSequence invert_norm(const FeatureSequence& seq, const NormStats& st) {
  FeatureSequence out = seq;
  for (double& x : out.envelopes.v) x = x * st.env_sd + st.env_mean;
  for (double& x : out.f0) x = std::exp(x * st.logf0_sd + st.logf0_mean);
  for (double& x : out.loudness) x = x * st.loud_sd + st.loud_mean;
  return out;
}

// ---- split and sampling -----------------------------------------------------

SplitIndices split_corpus(int n_phrases) {
  SplitIndices s;
  for (int i = 0; i < n_phrases; ++i) {
    if (splitmix64(static_cast<uint64_t>(i)) % 10 == 0)
      s.test.push_back(i);
    else
      s.train.push_back(i);
  }
  return s;
}

std::vector<Window> sample_minibatch(const std::vector<FeatureSequence>& corpus,
                                     const std::vector<int>& phrase_ids, int batch, int span,
                                     Rng& rng) {
  if (batch < 1) throw std::invalid_argument("batch must be >= 1");
  int64_t total = 0;
  std::vector<int64_t> starts_per_phrase(phrase_ids.size(), 0);
  for (size_t i = 0; i < phrase_ids.size(); ++i) {
    const int len = corpus[static_cast<size_t>(phrase_ids[i])].length();
    if (len >= span) {
      starts_per_phrase[i] = len - span + 1;
      total += starts_per_phrase[i];
    }
  }
  if (total == 0)
    throw std::runtime_error("no phrase long enough for a window of " + std::to_string(span) +
                             " frames");
  std::vector<Window> batch_out;
  batch_out.reserve(static_cast<size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    int64_t r = rng.uniform_int(total);
    Window w;
    for (size_t i = 0; i < phrase_ids.size(); ++i) {
      if (r < starts_per_phrase[i]) {
        w.phrase = phrase_ids[i];
        w.start = static_cast<int>(r);
        w.span = span;
        break;
      }
      r -= starts_per_phrase[i];
    }
    batch_out.push_back(w);
  }
  return batch_out;
}

}  // namespace envpred
