#include "envpred/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "envpred/cgm.hpp"

namespace envpred {

Tensor generate_with(const FrameFn& fn, int T, const Tensor& seed_env_db) {
  if (seed_env_db.rank() != 2) throw std::invalid_argument("seed envelopes must be [W,bins]");
  const int W = seed_env_db.dim(0), nb = seed_env_db.dim(1);
  if (T <= W) throw std::invalid_argument("generation length must exceed the seed window");
  Tensor out({T, nb});
  for (int t = 0; t < W; ++t)
    for (int f = 0; f < nb; ++f) out.at2(t, f) = seed_env_db.at2(t, f);
  Tensor hist = seed_env_db;
  for (int t = W; t < T; ++t) {
    const Tensor frame = fn(t, hist);
    if (frame.size() != nb) throw std::runtime_error("frame function returned wrong bin count");
    for (int f = 0; f < nb; ++f) out.at2(t, f) = frame.v[static_cast<size_t>(f)];
    // slide the history window
    for (int i = 0; i + 1 < W; ++i)
      for (int f = 0; f < nb; ++f) hist.at2(i, f) = hist.at2(i + 1, f);
    for (int f = 0; f < nb; ++f) hist.at2(W - 1, f) = frame.v[static_cast<size_t>(f)];
  }
  return out;
}

Tensor generate(const GenerationRequest& req) {
  if (!req.model) throw std::invalid_argument("generation request needs a model");
  const Model& m = *req.model;
  const ModelConfig& cfg = m.cfg;
  const NormStats& st = m.norm;
  const int T = static_cast<int>(req.phonemes.size());
  if (req.f0.size() != static_cast<size_t>(T) || req.loudness.size() != static_cast<size_t>(T))
    throw std::invalid_argument("control tracks must share one length, got phonemes " +
                                std::to_string(req.phonemes.size()) + ", f0 " +
                                std::to_string(req.f0.size()) + ", loudness " +
                                std::to_string(req.loudness.size()));
  const int W = cfg.env_window();
  if (T <= W) throw std::invalid_argument("control tracks must be longer than the seed window");
  if (req.seed_env.rank() != 2 || req.seed_env.dim(0) != W || req.seed_env.dim(1) != cfg.n_bins)
    throw std::invalid_argument("seed envelopes must be [" + std::to_string(W) + "," +
                                std::to_string(cfg.n_bins) + "]");

  // a sequence view for control-window extraction with edge clamping
  FeatureSequence tracks;
  tracks.vocab = cfg.vocab;
  tracks.phonemes = req.phonemes;
  tracks.f0 = req.f0;
  tracks.loudness = req.loudness;
  tracks.envelopes = Tensor({T, cfg.n_bins});

  Rng rng(splitmix64(req.rng_seed ^ 0x67656e6572617465ull));
  const ReceptiveField rf = receptive_field(cfg);

  FrameFn fn = [&](int t, const Tensor& hist_db) {
    PredictionInput in;
    in.env_history = Tensor({W, cfg.n_bins});
    for (int i = 0; i < W; ++i)
      for (int f = 0; f < cfg.n_bins; ++f)
        in.env_history.at2(i, f) = (hist_db.at2(i, f) - st.env_mean) / st.env_sd;
    auto clamp_idx = [T](int i) { return std::min(std::max(i, 0), T - 1); };
    for (int i = t - rf.phoneme.past; i <= t + rf.phoneme.future; ++i)
      in.phonemes.push_back(tracks.phonemes[static_cast<size_t>(clamp_idx(i))]);
    for (int i = t - rf.f0.past; i <= t + rf.f0.future; ++i)
      in.f0.push_back((std::log(tracks.f0[static_cast<size_t>(clamp_idx(i))]) - st.logf0_mean) /
                      st.logf0_sd);
    for (int i = t - rf.loudness.past; i <= t + rf.loudness.future; ++i)
      in.loudness.push_back(
          (tracks.loudness[static_cast<size_t>(clamp_idx(i))] - st.loud_mean) / st.loud_sd);

    if (cfg.head == Head::mse || req.tau == 0.0) return predict_frame(m, in);
    const CGMParams params = predict_cgm(m, in);
    return cgm_sample(params, req.tau, rng);
  };
  return generate_with(fn, T, req.seed_env);
}

double eval_teacher_forced(const Model& m, const std::vector<FeatureSequence>& corpus,
                           const std::vector<int>& phrase_ids, const EvalOptions& opt) {
  if (phrase_ids.empty()) throw std::invalid_argument("evaluation split is empty");
  std::vector<int> ids = phrase_ids;
  std::sort(ids.begin(), ids.end());
  if (opt.phrase_cap > 0 && static_cast<int>(ids.size()) > opt.phrase_cap)
    ids.resize(static_cast<size_t>(opt.phrase_cap));
  const int stride = std::max(1, opt.frame_stride);
  const int W = m.cfg.env_window();

  double total = 0.0;
  int used = 0;
  for (int pid : ids) {
    const FeatureSequence& seq = corpus[static_cast<size_t>(pid)];
    if (seq.length() <= W) continue;
    double acc = 0.0;
    int n = 0;
    for (int t = W; t < seq.length(); t += stride) {
      const PredictionInput in = make_input(seq, m.norm, m.cfg, t);
      const Tensor pred = predict_frame(m, in);
      double e = 0.0;
      for (int f = 0; f < m.cfg.n_bins; ++f) {
        const double d = pred.v[static_cast<size_t>(f)] - seq.envelopes.at2(t, f);
        e += d * d;
      }
      acc += e / m.cfg.n_bins;
      ++n;
    }
    if (n > 0) {
      total += acc / n;
      ++used;
    }
  }
  if (used == 0) throw std::runtime_error("no phrase long enough to evaluate");
  return total / used;
}

std::vector<double> free_run_drift(const Model& m, const std::vector<FeatureSequence>& corpus,
                                   const std::vector<int>& phrase_ids, int horizon) {
  if (phrase_ids.empty()) throw std::invalid_argument("evaluation split is empty");
  const int W = m.cfg.env_window();
  std::vector<int> ids = phrase_ids;
  std::sort(ids.begin(), ids.end());
  std::vector<double> curve(static_cast<size_t>(horizon) + 1, 0.0);
  int used = 0;
  for (int pid : ids) {
    const FeatureSequence& seq = corpus[static_cast<size_t>(pid)];
    if (seq.length() < W + horizon)
      throw std::runtime_error("phrase " + std::to_string(pid) + " too short for horizon " +
                               std::to_string(horizon) + ": " + std::to_string(seq.length()) +
                               " frames");
    const int T = W + horizon;
    GenerationRequest req;
    req.model = &m;
    req.phonemes.assign(seq.phonemes.begin(), seq.phonemes.begin() + T);
    req.f0.assign(seq.f0.begin(), seq.f0.begin() + T);
    req.loudness.assign(seq.loudness.begin(), seq.loudness.begin() + T);
    req.seed_env = Tensor({W, m.cfg.n_bins});
    for (int i = 0; i < W; ++i)
      for (int f = 0; f < m.cfg.n_bins; ++f) req.seed_env.at2(i, f) = seq.envelopes.at2(i, f);
    req.tau = 0.0;
    const Tensor gen = generate(req);
    for (int h = 1; h <= horizon; ++h) {
      double e = 0.0;
      for (int f = 0; f < m.cfg.n_bins; ++f)
        e += std::fabs(gen.at2(W - 1 + h, f) - seq.envelopes.at2(W - 1 + h, f));
      curve[static_cast<size_t>(h)] += e / m.cfg.n_bins;
    }
    ++used;
  }
  for (double& x : curve) x /= used;
  return curve;
}

double repeat_prev_baseline(const std::vector<FeatureSequence>& corpus,
                            const std::vector<int>& phrase_ids, const EvalOptions& opt,
                            int first_frame) {
  if (phrase_ids.empty()) throw std::invalid_argument("evaluation split is empty");
  std::vector<int> ids = phrase_ids;
  std::sort(ids.begin(), ids.end());
  if (opt.phrase_cap > 0 && static_cast<int>(ids.size()) > opt.phrase_cap)
    ids.resize(static_cast<size_t>(opt.phrase_cap));
  const int stride = std::max(1, opt.frame_stride);
  double total = 0.0;
  int used = 0;
  for (int pid : ids) {
    const FeatureSequence& seq = corpus[static_cast<size_t>(pid)];
    const int nb = seq.n_bins();
    double acc = 0.0;
    int n = 0;
    for (int t = std::max(1, first_frame); t < seq.length(); t += stride) {
      double e = 0.0;
      for (int f = 0; f < nb; ++f) {
        const double d = seq.envelopes.at2(t, f) - seq.envelopes.at2(t - 1, f);
        e += d * d;
      }
      acc += e / nb;
      ++n;
    }
    if (n > 0) {
      total += acc / n;
      ++used;
    }
  }
  if (used == 0) throw std::runtime_error("no phrase long enough for the baseline");
  return total / used;
}

EvalReport evaluate_model(const Model& m, const std::vector<FeatureSequence>& corpus,
                          const std::vector<int>& phrase_ids, int drift_horizon,
                          const EvalOptions& opt) {
  EvalReport rep;
  std::vector<int> ids = phrase_ids;
  std::sort(ids.begin(), ids.end());
  if (opt.phrase_cap > 0 && static_cast<int>(ids.size()) > opt.phrase_cap)
    ids.resize(static_cast<size_t>(opt.phrase_cap));
  for (int pid : ids) {
    EvalOptions one = opt;
    one.phrase_cap = 0;
    rep.per_phrase_mse_db2.push_back(
        {pid, eval_teacher_forced(m, corpus, std::vector<int>{pid}, one)});
  }
  rep.mean_mse_db2 = eval_teacher_forced(m, corpus, ids, opt);
  rep.baseline_mse_db2 = repeat_prev_baseline(corpus, ids, opt, m.cfg.env_window());
  rep.drift_db = free_run_drift(m, corpus, ids, drift_horizon);
  return rep;
}

}  // namespace envpred
