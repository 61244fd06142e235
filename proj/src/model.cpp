#include "envpred/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace envpred {

using ad::Act;
using ad::Alignment;
using ad::ConvSpec;
using ad::Padding;
using ad::Var;

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::proposed: return "proposed";
    case Variant::bb1: return "bb1";
    case Variant::bb2: return "bb2";
  }
  return "?";
}

std::string head_name(Head h) { return h == Head::mse ? "mse" : "cgm"; }

Variant parse_variant(const std::string& s) {
  if (s == "proposed") return Variant::proposed;
  if (s == "bb1") return Variant::bb1;
  if (s == "bb2") return Variant::bb2;
  throw std::invalid_argument("unknown variant '" + s + "'");
}

Head parse_head(const std::string& s) {
  if (s == "mse") return Head::mse;
  if (s == "cgm") return Head::cgm;
  throw std::invalid_argument("unknown head '" + s + "'");
}

namespace {

std::string act_name(Act a) {
  switch (a) {
    case Act::relu: return "relu";
    case Act::tanh: return "tanh";
    case Act::gated: return "gated";
  }
  return "?";
}

Act parse_act(const std::string& s) {
  if (s == "relu") return Act::relu;
  if (s == "tanh") return Act::tanh;
  if (s == "gated") return Act::gated;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

int act_out(int features, Act a) { return a == Act::gated ? 2 * features : features; }

}  // namespace

void ModelConfig::validate() const {
  if (n_bins < 2) throw std::invalid_argument("config: n_bins must be >= 2");
  if (n_e < 1 || n_ph < 1 || n_f0 < 1 || n_loud < 1)
    throw std::invalid_argument("config: stack depths must be >= 1");
  if (freq_stacks < 1 || layers_per_stack < 1)
    throw std::invalid_argument("config: frequency trunk needs at least one stack and layer");
  if (growth < 1 || bottleneck < 1 || time_channels < 1)
    throw std::invalid_argument("config: channel widths must be >= 1");
  if (cgm_k < 1 || cgm_k > 64) throw std::invalid_argument("config: cgm_k must be in [1,64]");
  if (vocab < 1) throw std::invalid_argument("config: vocabulary must be >= 1");
  if (bb1_channels < 1 || bb2_channels < 1 || cond_features < 1)
    throw std::invalid_argument("config: baseline channel widths must be >= 1");
  if (sigma_min <= 0.0) throw std::invalid_argument("config: sigma_min must be > 0");
}

ReceptiveField receptive_field(const ModelConfig& cfg) {
  ReceptiveField rf;
  rf.envelope = {cfg.env_window(), 0};
  auto ctl = [](int window) { return BranchField{window / 2, window / 2 - 1}; };
  rf.phoneme = ctl(cfg.phoneme_window());
  rf.f0 = ctl(cfg.f0_window());
  rf.loudness = ctl(cfg.loud_window());
  return rf;
}

int past_extent(const ModelConfig& cfg) {
  const ReceptiveField rf = receptive_field(cfg);
  return std::max({rf.envelope.past, rf.phoneme.past, rf.f0.past, rf.loudness.past});
}

int future_extent(const ModelConfig& cfg) {
  const ReceptiveField rf = receptive_field(cfg);
  return std::max({rf.phoneme.future, rf.f0.future, rf.loudness.future});
}

const Var& Model::param(const std::string& name) const {
  for (const Param& p : params)
    if (p.name == name) return p.var;
  throw std::invalid_argument("no parameter named '" + name + "'");
}

std::vector<Var> Model::param_vars() const {
  std::vector<Var> out;
  out.reserve(params.size());
  for (const Param& p : params) out.push_back(p.var);
  return out;
}

void Model::zero_grads() const {
  for (const Param& p : params) p.var.node()->zero_grad();
}

// ---- construction -----------------------------------------------------------

namespace {

struct ParamBuilder {
  std::vector<Param> params;
  Rng rng;

  explicit ParamBuilder(uint64_t seed) : rng(splitmix64(seed ^ 0x6d6f64656c5f7731ull)) {}

  Var add_uniform(const std::string& name, Shape shape, double limit) {
    Tensor t(shape);
    for (double& x : t.v) x = rng.uniform(-limit, limit);
    params.push_back({name, ad::leaf(std::move(t), true)});
    return params.back().var;
  }
  Var add_conv(const std::string& name, int kt, int kf, int cin, int cout) {
    const double limit = std::sqrt(1.0 / (static_cast<double>(kt) * kf * cin));
    return add_uniform(name, {kt, kf, cin, cout}, limit);
  }
  Var add_zeros(const std::string& name, Shape shape) {
    params.push_back({name, ad::leaf(Tensor(shape), true)});
    return params.back().var;
  }
};

void build_time_stack(ParamBuilder& pb, const std::string& prefix, int n_layers, int tc, Act act) {
  for (int l = 0; l < n_layers; ++l) {
    const int cin = l == 0 ? 1 : tc;
    pb.add_conv(prefix + ".l" + std::to_string(l) + ".w", 2, 1, cin, act_out(tc, act));
    pb.add_zeros(prefix + ".l" + std::to_string(l) + ".b", {act_out(tc, act)});
  }
}

void build_control_encoders(ParamBuilder& pb, const ModelConfig& cfg) {
  pb.add_uniform("embed.table", {cfg.vocab, cfg.n_bins}, 0.5);
  pb.add_uniform("f0.basis", {cfg.n_bins}, 0.5);
  pb.add_uniform("loud.basis", {cfg.n_bins}, 0.5);
  build_time_stack(pb, "ph", cfg.n_ph, cfg.time_channels, cfg.time_act);
  build_time_stack(pb, "f0", cfg.n_f0, cfg.time_channels, cfg.time_act);
  build_time_stack(pb, "loud", cfg.n_loud, cfg.time_channels, cfg.time_act);
}

int head_features(const ModelConfig& cfg) { return cfg.head == Head::mse ? 1 : 3 * cfg.cgm_k; }

}  // namespace

Model build_model(const ModelConfig& cfg, Variant variant, uint64_t seed) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  m.variant = variant;
  ParamBuilder pb(seed);
  const int tc = cfg.time_channels;

  if (variant == Variant::proposed) {
    build_control_encoders(pb, cfg);
    build_time_stack(pb, "env", cfg.n_e, tc, cfg.time_act);
    int c = 4 * tc;
    pb.add_conv("trunk.in.w", 1, 1, c, act_out(cfg.bottleneck, cfg.freq_act));
    pb.add_zeros("trunk.in.b", {act_out(cfg.bottleneck, cfg.freq_act)});
    c = cfg.bottleneck;
    for (int s = 0; s < cfg.freq_stacks; ++s) {
      for (int l = 0; l < cfg.layers_per_stack; ++l) {
        const std::string p = "trunk.s" + std::to_string(s) + ".l" + std::to_string(l);
        pb.add_conv(p + ".bn.w", 1, 1, c, act_out(cfg.bottleneck, cfg.freq_act));
        pb.add_zeros(p + ".bn.b", {act_out(cfg.bottleneck, cfg.freq_act)});
        pb.add_conv(p + ".gw.w", 1, 2, cfg.bottleneck, act_out(cfg.growth, cfg.freq_act));
        pb.add_zeros(p + ".gw.b", {act_out(cfg.growth, cfg.freq_act)});
        c += cfg.growth;
      }
      if (s + 1 < cfg.freq_stacks) {
        const std::string p = "trunk.t" + std::to_string(s);
        pb.add_conv(p + ".w", 1, 1, c, act_out(cfg.bottleneck, cfg.freq_act));
        pb.add_zeros(p + ".b", {act_out(cfg.bottleneck, cfg.freq_act)});
        c = cfg.bottleneck;
      }
    }
    pb.add_conv("head.w", 1, 1, c, head_features(cfg));
    pb.add_zeros("head.b", {head_features(cfg)});
  } else {
    build_control_encoders(pb, cfg);
    const int q = cfg.cond_features;
    pb.add_conv("cond.w", 1, 1, 3 * tc, act_out(q, cfg.freq_act));
    pb.add_zeros("cond.b", {act_out(q, cfg.freq_act)});
    const int ch = variant == Variant::bb1 ? cfg.bb1_channels : cfg.bb2_channels;
    const int kf = variant == Variant::bb1 ? 1 : 3;
    for (int l = 0; l < cfg.n_e; ++l) {
      int cin;
      if (l == 0)
        cin = variant == Variant::bb1 ? cfg.n_bins * (1 + q) : 1 + q;
      else
        cin = ch;
      const std::string p = "bb.l" + std::to_string(l);
      pb.add_conv(p + ".w", 2, kf, cin, act_out(ch, cfg.time_act));
      pb.add_zeros(p + ".b", {act_out(ch, cfg.time_act)});
    }
    const int out_f = variant == Variant::bb1 ? cfg.n_bins * head_features(cfg) : head_features(cfg);
    pb.add_conv("head.w", 1, 1, ch, out_f);
    pb.add_zeros("head.b", {out_f});
  }

  m.params = std::move(pb.params);
  return m;
}

Model clone_model(const Model& m) {
  Model c;
  c.cfg = m.cfg;
  c.variant = m.variant;
  c.norm = m.norm;
  for (const Param& p : m.params) c.params.push_back({p.name, ad::leaf(p.var.value(), true)});
  return c;
}

int64_t param_count(const Model& m) {
  int64_t n = 0;
  for (const Param& p : m.params) n += p.var.value().size();
  return n;
}

// ---- forward ----------------------------------------------------------------

namespace {

Var conv_layer(const Model& m, const std::string& prefix, const Var& x, const ConvSpec& spec,
               Act act) {
  Var y = ad::conv2d(x, m.param(prefix + ".w"), spec);
  y = ad::bias_add(y, m.param(prefix + ".b"));
  return ad::activation(y, act);
}

// window of 2^n frames -> [1, n_bins, tc]
Var time_stack_forward(const Model& m, const std::string& prefix, Var x, int n_layers,
                       Alignment align) {
  const int tc = m.cfg.time_channels;
  for (int l = 0; l < n_layers; ++l) {
    ConvSpec spec;
    spec.kt = 2;
    spec.kf = 1;
    spec.dt = 1 << l;
    spec.df = 1;
    spec.padding = Padding::none;
    spec.alignment = align;
    spec.in_features = l == 0 ? 1 : tc;
    spec.out_features = act_out(tc, m.cfg.time_act);
    x = conv_layer(m, prefix + ".l" + std::to_string(l), x, spec, m.cfg.time_act);
  }
  return x;
}

ConvSpec spec_1x1(int cin, int cout) {
  ConvSpec s;
  s.in_features = cin;
  s.out_features = cout;
  s.alignment = Alignment::not_applicable;
  return s;
}

// shared control encoding: [1, n_bins, 3*tc]
Var control_encoding(const Model& m, const std::vector<int>& phonemes,
                     const std::vector<double>& f0, const std::vector<double>& loudness) {
  const ModelConfig& cfg = m.cfg;
  Var emb = ad::embedding_lookup(phonemes, m.param("embed.table"));
  Var ph = ad::reshape(emb, {cfg.phoneme_window(), cfg.n_bins, 1});
  ph = time_stack_forward(m, "ph", ph, cfg.n_ph, Alignment::symmetric_time);

  Var f0_track = ad::leaf(Tensor({cfg.f0_window()}, std::vector<double>(f0.begin(), f0.end())));
  Var f0_grid = ad::scalar_expand(f0_track, m.param("f0.basis"));
  Var f0_b = ad::reshape(f0_grid, {cfg.f0_window(), cfg.n_bins, 1});
  f0_b = time_stack_forward(m, "f0", f0_b, cfg.n_f0, Alignment::symmetric_time);

  Var ld_track =
      ad::leaf(Tensor({cfg.loud_window()}, std::vector<double>(loudness.begin(), loudness.end())));
  Var ld_grid = ad::scalar_expand(ld_track, m.param("loud.basis"));
  Var ld_b = ad::reshape(ld_grid, {cfg.loud_window(), cfg.n_bins, 1});
  ld_b = time_stack_forward(m, "loud", ld_b, cfg.n_loud, Alignment::symmetric_time);

  return ad::concat_features({ph, f0_b, ld_b});
}

Var freq_trunk_forward(const Model& m, Var x) {
  const ModelConfig& cfg = m.cfg;
  int c = x.shape()[2];
  x = conv_layer(m, "trunk.in", x, spec_1x1(c, act_out(cfg.bottleneck, cfg.freq_act)), cfg.freq_act);
  c = cfg.bottleneck;
  for (int s = 0; s < cfg.freq_stacks; ++s) {
    for (int l = 0; l < cfg.layers_per_stack; ++l) {
      const std::string p = "trunk.s" + std::to_string(s) + ".l" + std::to_string(l);
      Var z = conv_layer(m, p + ".bn", x, spec_1x1(c, act_out(cfg.bottleneck, cfg.freq_act)),
                         cfg.freq_act);
      ConvSpec gs;
      gs.kt = 1;
      gs.kf = 2;
      gs.dt = 1;
      gs.df = 1 << l;
      gs.padding = Padding::same_frequency;
      gs.alignment = Alignment::not_applicable;
      gs.in_features = cfg.bottleneck;
      gs.out_features = act_out(cfg.growth, cfg.freq_act);
      Var g = conv_layer(m, p + ".gw", z, gs, cfg.freq_act);
      x = ad::concat_features({x, g});
      c += cfg.growth;
    }
    if (s + 1 < cfg.freq_stacks) {
      x = conv_layer(m, "trunk.t" + std::to_string(s), x,
                     spec_1x1(c, act_out(cfg.bottleneck, cfg.freq_act)), cfg.freq_act);
      c = cfg.bottleneck;
    }
  }
  return x;
}

void check_windows(const ModelConfig& cfg, size_t env_n, size_t ph_n, size_t f0_n, size_t loud_n) {
  auto need = [](size_t got, int want, const char* what) {
    if (got != static_cast<size_t>(want))
      throw std::invalid_argument(std::string("wrong ") + what + " window length: got " +
                                  std::to_string(got) + ", expected " + std::to_string(want));
  };
  need(env_n, cfg.env_window(), "envelope");
  need(ph_n, cfg.phoneme_window(), "phoneme");
  need(f0_n, cfg.f0_window(), "f0");
  need(loud_n, cfg.loud_window(), "loudness");
}

}  // namespace

Var predict_raw(const Model& m, const std::vector<Var>& env_frames,
                const std::vector<int>& phonemes, const std::vector<double>& f0,
                const std::vector<double>& loudness) {
  const ModelConfig& cfg = m.cfg;
  check_windows(cfg, env_frames.size(), phonemes.size(), f0.size(), loudness.size());
  for (const Var& fr : env_frames)
    if (fr.value().size() != cfg.n_bins)
      throw std::invalid_argument("envelope history frame size does not match n_bins");

  const int W = cfg.env_window();
  const int nb = cfg.n_bins;
  const int out_f = head_features(cfg);

  if (m.variant == Variant::proposed) {
    Var env = ad::stack_frames(env_frames);  // [W, nb, 1]
    env = time_stack_forward(m, "env", env, cfg.n_e, Alignment::causal_time);
    Var ctl = control_encoding(m, phonemes, f0, loudness);
    Var x = ad::concat_features({env, ctl});  // [1, nb, 4*tc]
    x = freq_trunk_forward(m, x);
    Var raw = ad::bias_add(ad::conv2d(x, m.param("head.w"), spec_1x1(x.shape()[2], out_f)),
                           m.param("head.b"));
    if (cfg.head == Head::mse) {
      Var delta = ad::reshape(raw, {nb});
      return ad::add(env_frames.back(), delta);
    }
    return ad::reshape(raw, {nb, 3 * cfg.cgm_k});
  }

  // baselines: identical inputs, control encoding projected and tiled in time
  const int q = cfg.cond_features;
  Var ctl = control_encoding(m, phonemes, f0, loudness);
  Var cond = conv_layer(m, "cond", ctl, spec_1x1(3 * cfg.time_channels, act_out(q, cfg.freq_act)),
                        cfg.freq_act);  // [1, nb, q]

  Var x;
  if (m.variant == Variant::bb1) {
    Var env = ad::reshape(ad::stack_frames(env_frames), {W, 1, nb});  // bins as channels
    Var cond_flat = ad::tile_time(ad::reshape(cond, {1, 1, nb * q}), W);
    x = ad::concat_features({env, cond_flat});  // [W, 1, nb*(1+q)]
  } else {
    Var env = ad::stack_frames(env_frames);  // [W, nb, 1]
    Var cond_t = ad::tile_time(cond, W);     // [W, nb, q]
    x = ad::concat_features({env, cond_t});  // [W, nb, 1+q]
  }

  const int ch = m.variant == Variant::bb1 ? cfg.bb1_channels : cfg.bb2_channels;
  for (int l = 0; l < cfg.n_e; ++l) {
    ConvSpec spec;
    spec.kt = 2;
    spec.kf = m.variant == Variant::bb1 ? 1 : 3;
    spec.dt = 1 << l;
    spec.df = m.variant == Variant::bb1 ? 1 : (1 << l);
    spec.padding = m.variant == Variant::bb1 ? Padding::none : Padding::same_frequency;
    spec.alignment = Alignment::causal_time;
    spec.in_features = x.shape()[2];
    spec.out_features = act_out(ch, cfg.time_act);
    x = conv_layer(m, "bb.l" + std::to_string(l), x, spec, cfg.time_act);
  }

  const int head_out = m.variant == Variant::bb1 ? nb * out_f : out_f;
  Var raw = ad::bias_add(ad::conv2d(x, m.param("head.w"), spec_1x1(ch, head_out)),
                         m.param("head.b"));
  if (cfg.head == Head::mse) {
    Var delta = ad::reshape(raw, {nb});
    return ad::add(env_frames.back(), delta);
  }
  return ad::reshape(raw, {nb, 3 * cfg.cgm_k});
}

// ---- inference helpers ------------------------------------------------------

PredictionInput make_input(const FeatureSequence& seq, const NormStats& st,
                           const ModelConfig& cfg, int t) {
  const int T = seq.length();
  const int W = cfg.env_window();
  if (t < W)
    throw std::invalid_argument("cannot build input at frame " + std::to_string(t) +
                                ": needs " + std::to_string(W) + " history frames");
  if (t >= T) throw std::invalid_argument("frame index beyond sequence end");
  PredictionInput in;
  in.env_history = Tensor({W, cfg.n_bins});
  for (int i = 0; i < W; ++i)
    for (int f = 0; f < cfg.n_bins; ++f)
      in.env_history.at2(i, f) = (seq.envelopes.at2(t - W + i, f) - st.env_mean) / st.env_sd;

  const ReceptiveField rf = receptive_field(cfg);
  auto clamp_idx = [T](int i) { return std::min(std::max(i, 0), T - 1); };
  for (int i = t - rf.phoneme.past; i <= t + rf.phoneme.future; ++i)
    in.phonemes.push_back(seq.phonemes[static_cast<size_t>(clamp_idx(i))]);
  for (int i = t - rf.f0.past; i <= t + rf.f0.future; ++i)
    in.f0.push_back((std::log(seq.f0[static_cast<size_t>(clamp_idx(i))]) - st.logf0_mean) /
                    st.logf0_sd);
  for (int i = t - rf.loudness.past; i <= t + rf.loudness.future; ++i)
    in.loudness.push_back((seq.loudness[static_cast<size_t>(clamp_idx(i))] - st.loud_mean) /
                          st.loud_sd);
  return in;
}

namespace {

std::vector<Var> history_vars(const Tensor& env_history) {
  std::vector<Var> frames;
  const int W = env_history.dim(0), nb = env_history.dim(1);
  for (int i = 0; i < W; ++i) {
    Tensor fr({nb});
    for (int f = 0; f < nb; ++f) fr.v[static_cast<size_t>(f)] = env_history.at2(i, f);
    frames.push_back(ad::leaf(std::move(fr)));
  }
  return frames;
}

}  // namespace

Tensor predict_frame(const Model& m, const PredictionInput& in) {
  if (m.cfg.head == Head::mse) {
    std::vector<Var> frames = history_vars(in.env_history);
    Var out = predict_raw(m, frames, in.phonemes, in.f0, in.loudness);
    Tensor db = out.value();
    for (double& x : db.v) x = x * m.norm.env_sd + m.norm.env_mean;
    return db;
  }
  const CGMParams params = predict_cgm(m, in);
  Rng unused(0);
  return cgm_sample(params, 0.0, unused);
}

CGMParams predict_cgm(const Model& m, const PredictionInput& in) {
  if (m.cfg.head != Head::cgm)
    throw std::invalid_argument("predict_cgm requires a cgm-head model");
  std::vector<Var> frames = history_vars(in.env_history);
  Var raw = predict_raw(m, frames, in.phonemes, in.f0, in.loudness);
  const int nb = m.cfg.n_bins;
  Tensor prev_db({nb});
  for (int f = 0; f < nb; ++f)
    prev_db.v[static_cast<size_t>(f)] =
        in.env_history.at2(m.cfg.env_window() - 1, f) * m.norm.env_sd + m.norm.env_mean;
  return cgm_params_from_raw(raw.value(), prev_db, m.cfg.sigma_min);
}

// ---- checkpoint io ----------------------------------------------------------

namespace {

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

void save_model(const Model& m, const std::string& path_prefix) {
  std::ofstream mf(path_prefix + ".manifest");
  if (!mf) throw std::runtime_error("cannot open " + path_prefix + ".manifest for writing");
  mf << "envpred-model v1\n";
  mf << "variant " << variant_name(m.variant) << "\n";
  mf << "head " << head_name(m.cfg.head) << "\n";
  mf << "n_bins " << m.cfg.n_bins << "\n";
  mf << "n_e " << m.cfg.n_e << "\n";
  mf << "n_ph " << m.cfg.n_ph << "\n";
  mf << "n_f0 " << m.cfg.n_f0 << "\n";
  mf << "n_loud " << m.cfg.n_loud << "\n";
  mf << "freq_stacks " << m.cfg.freq_stacks << "\n";
  mf << "layers_per_stack " << m.cfg.layers_per_stack << "\n";
  mf << "growth " << m.cfg.growth << "\n";
  mf << "bottleneck " << m.cfg.bottleneck << "\n";
  mf << "time_channels " << m.cfg.time_channels << "\n";
  mf << "cgm_k " << m.cfg.cgm_k << "\n";
  mf << "vocab " << m.cfg.vocab << "\n";
  mf << "time_act " << act_name(m.cfg.time_act) << "\n";
  mf << "freq_act " << act_name(m.cfg.freq_act) << "\n";
  mf << "bb1_channels " << m.cfg.bb1_channels << "\n";
  mf << "bb2_channels " << m.cfg.bb2_channels << "\n";
  mf << "cond_features " << m.cfg.cond_features << "\n";
  mf << "sigma_min " << fmt_double(m.cfg.sigma_min) << "\n";
  mf << "norm_env_mean " << fmt_double(m.norm.env_mean) << "\n";
  mf << "norm_env_sd " << fmt_double(m.norm.env_sd) << "\n";
  mf << "norm_logf0_mean " << fmt_double(m.norm.logf0_mean) << "\n";
  mf << "norm_logf0_sd " << fmt_double(m.norm.logf0_sd) << "\n";
  mf << "norm_loud_mean " << fmt_double(m.norm.loud_mean) << "\n";
  mf << "norm_loud_sd " << fmt_double(m.norm.loud_sd) << "\n";
  mf << "params " << m.params.size() << "\n";
  int64_t offset = 0;
  for (const Param& p : m.params) {
    mf << "param " << p.name << " " << p.var.value().rank();
    for (int d : p.var.shape()) mf << " " << d;
    mf << " " << offset * static_cast<int64_t>(sizeof(double)) << " " << p.var.value().size()
       << "\n";
    offset += p.var.value().size();
  }
  mf << "end\n";
  if (!mf) throw std::runtime_error("write failed for " + path_prefix + ".manifest");

  std::ofstream bf(path_prefix + ".blob", std::ios::binary);
  if (!bf) throw std::runtime_error("cannot open " + path_prefix + ".blob for writing");
  for (const Param& p : m.params) {
    const Tensor& t = p.var.value();
    bf.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.v.size() * sizeof(double)));
  }
  if (!bf) throw std::runtime_error("write failed for " + path_prefix + ".blob");
}

Model load_model(const std::string& path_prefix) {
  std::ifstream mf(path_prefix + ".manifest");
  if (!mf) throw std::runtime_error("cannot open " + path_prefix + ".manifest");
  std::string line;
  if (!std::getline(mf, line) || line != "envpred-model v1")
    throw std::runtime_error("checkpoint version mismatch in " + path_prefix + ".manifest");

  ModelConfig cfg;
  Variant variant = Variant::proposed;
  NormStats norm;
  struct ParamRec {
    std::string name;
    Shape shape;
    int64_t offset = 0, count = 0;
  };
  std::vector<ParamRec> recs;
  bool saw_end = false;

  while (std::getline(mf, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "end") {
      saw_end = true;
      break;
    } else if (key == "param") {
      ParamRec r;
      int rank = 0;
      ss >> r.name >> rank;
      for (int i = 0; i < rank; ++i) {
        int d = 0;
        ss >> d;
        r.shape.push_back(d);
      }
      ss >> r.offset >> r.count;
      if (!ss) throw std::runtime_error("malformed param record in manifest: " + line);
      recs.push_back(std::move(r));
    } else {
      std::string val;
      ss >> val;
      if (key == "variant") variant = parse_variant(val);
      else if (key == "head") cfg.head = parse_head(val);
      else if (key == "n_bins") cfg.n_bins = std::stoi(val);
      else if (key == "n_e") cfg.n_e = std::stoi(val);
      else if (key == "n_ph") cfg.n_ph = std::stoi(val);
      else if (key == "n_f0") cfg.n_f0 = std::stoi(val);
      else if (key == "n_loud") cfg.n_loud = std::stoi(val);
      else if (key == "freq_stacks") cfg.freq_stacks = std::stoi(val);
      else if (key == "layers_per_stack") cfg.layers_per_stack = std::stoi(val);
      else if (key == "growth") cfg.growth = std::stoi(val);
      else if (key == "bottleneck") cfg.bottleneck = std::stoi(val);
      else if (key == "time_channels") cfg.time_channels = std::stoi(val);
      else if (key == "cgm_k") cfg.cgm_k = std::stoi(val);
      else if (key == "vocab") cfg.vocab = std::stoi(val);
      else if (key == "time_act") cfg.time_act = parse_act(val);
      else if (key == "freq_act") cfg.freq_act = parse_act(val);
      else if (key == "bb1_channels") cfg.bb1_channels = std::stoi(val);
      else if (key == "bb2_channels") cfg.bb2_channels = std::stoi(val);
      else if (key == "cond_features") cfg.cond_features = std::stoi(val);
      else if (key == "sigma_min") cfg.sigma_min = std::stod(val);
      else if (key == "norm_env_mean") norm.env_mean = std::stod(val);
      else if (key == "norm_env_sd") norm.env_sd = std::stod(val);
      else if (key == "norm_logf0_mean") norm.logf0_mean = std::stod(val);
      else if (key == "norm_logf0_sd") norm.logf0_sd = std::stod(val);
      else if (key == "norm_loud_mean") norm.loud_mean = std::stod(val);
      else if (key == "norm_loud_sd") norm.loud_sd = std::stod(val);
      else if (key == "params") { /* count line, validated via records */ }
      else throw std::runtime_error("unknown manifest key '" + key + "'");
    }
  }
  if (!saw_end) throw std::runtime_error("truncated manifest (missing end) in " + path_prefix);

  Model m = build_model(cfg, variant, 0);
  m.norm = norm;
  if (recs.size() != m.params.size())
    throw std::runtime_error("manifest lists " + std::to_string(recs.size()) +
                             " parameters, model has " + std::to_string(m.params.size()));
  for (size_t i = 0; i < recs.size(); ++i) {
    if (recs[i].name != m.params[i].name)
      throw std::runtime_error("manifest parameter '" + recs[i].name + "' does not match model '" +
                               m.params[i].name + "'");
    if (recs[i].shape != m.params[i].var.shape())
      throw std::runtime_error("shape mismatch for parameter '" + recs[i].name + "': manifest " +
                               shape_str(recs[i].shape) + " vs model " +
                               shape_str(m.params[i].var.shape()));
    if (recs[i].count != m.params[i].var.value().size())
      throw std::runtime_error("count mismatch for parameter '" + recs[i].name + "'");
  }

  std::ifstream bf(path_prefix + ".blob", std::ios::binary);
  if (!bf) throw std::runtime_error("cannot open " + path_prefix + ".blob");
  for (size_t i = 0; i < recs.size(); ++i) {
    bf.seekg(recs[i].offset);
    Tensor& t = m.params[i].var.value();
    bf.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.v.size() * sizeof(double)));
    if (!bf)
      throw std::runtime_error("truncated blob while reading parameter '" + recs[i].name + "'");
  }
  return m;
}

}  // namespace envpred
