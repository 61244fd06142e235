#include "envpred/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "envpred/cgm.hpp"
#include "envpred/eval.hpp"

namespace envpred {

using ad::Var;

namespace {

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

void write_runlog(const RunLog& log, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  size_t e = 0;
  for (const UpdateRecord& u : log.updates) {
    os << "update=" << u.update << " lr=" << fmt_double(u.lr) << " loss=" << fmt_double(u.loss)
       << "\n";
    while (e < log.evals.size() && log.evals[e].update == u.update) {
      os << "eval=" << log.evals[e].update << " tf_mse_db2=" << fmt_double(log.evals[e].tf_mse_db2)
         << " drift_db=" << fmt_double(log.evals[e].drift_db) << "\n";
      ++e;
    }
  }
}

Trainer::Trainer(Model& model, const std::vector<FeatureSequence>& corpus, TrainConfig cfg)
    : model_(model),
      corpus_(corpus),
      cfg_(cfg),
      sample_rng_(splitmix64(cfg.seed ^ 0x73616d706c657231ull)),
      noise_rng_(splitmix64(cfg.seed ^ 0x6e6f697365727132ull)) {
  if (cfg_.batch < 1) throw std::invalid_argument("batch must be >= 1");
  if (cfg_.n_iter < 1) throw std::invalid_argument("n_iter must be >= 1");
  if (cfg_.sigma_db < 0.0) throw std::invalid_argument("sigma_db must be >= 0");
  split_ = split_corpus(static_cast<int>(corpus.size()));
  if (split_.train.empty()) throw std::runtime_error("train split is empty");
  model_.norm = compute_norm_stats(corpus_, split_.train);
  n_targets_ = cfg_.regime == Regime::iterated ? cfg_.n_iter : 1;
  span_ = past_extent(model_.cfg) + n_targets_ + future_extent(model_.cfg);
  state_.cfg = cfg_.adam;
  auto params = model_.param_vars();
  state_.init(params);
}

std::vector<Window> Trainer::next_batch() {
  auto batch = sample_minibatch(corpus_, split_.train, cfg_.batch, span_, sample_rng_);
  for (const Window& w : batch) sampled_.insert(w.phrase);
  return batch;
}

std::vector<int> Trainer::sampled_phrases() const {
  return std::vector<int>(sampled_.begin(), sampled_.end());
}

namespace {

// normalized control windows for the frame at window-local index t_loc
struct CtlWindows {
  std::vector<int> ph;
  std::vector<double> f0, loud;
};

CtlWindows ctl_windows(const FeatureSequence& seq, const NormStats& st, const ModelConfig& cfg,
                       int t_abs) {
  const ReceptiveField rf = receptive_field(cfg);
  CtlWindows w;
  for (int i = t_abs - rf.phoneme.past; i <= t_abs + rf.phoneme.future; ++i)
    w.ph.push_back(seq.phonemes[static_cast<size_t>(i)]);
  for (int i = t_abs - rf.f0.past; i <= t_abs + rf.f0.future; ++i)
    w.f0.push_back((std::log(seq.f0[static_cast<size_t>(i)]) - st.logf0_mean) / st.logf0_sd);
  for (int i = t_abs - rf.loudness.past; i <= t_abs + rf.loudness.future; ++i)
    w.loud.push_back((seq.loudness[static_cast<size_t>(i)] - st.loud_mean) / st.loud_sd);
  return w;
}

Tensor norm_frame(const FeatureSequence& seq, const NormStats& st, int t) {
  const int nb = seq.n_bins();
  Tensor fr({nb});
  for (int f = 0; f < nb; ++f) fr.v[static_cast<size_t>(f)] = (seq.envelopes.at2(t, f) - st.env_mean) / st.env_sd;
  return fr;
}

Tensor db_frame(const FeatureSequence& seq, int t) {
  const int nb = seq.n_bins();
  Tensor fr({nb});
  for (int f = 0; f < nb; ++f) fr.v[static_cast<size_t>(f)] = seq.envelopes.at2(t, f);
  return fr;
}

}  // namespace

double Trainer::step_iterated(const std::vector<Window>& batch, int n_iter) {
  const ModelConfig& cfg = model_.cfg;
  const NormStats& st = model_.norm;
  const int W = cfg.env_window();
  const int pre = past_extent(cfg);
  std::vector<Var> losses;

  for (const Window& w : batch) {
    const FeatureSequence& seq = corpus_[static_cast<size_t>(w.phrase)];
    std::vector<Var> history;
    for (int i = 0; i < W; ++i)
      history.push_back(ad::leaf(norm_frame(seq, st, w.start + pre - W + i)));

    for (int it = 0; it < n_iter; ++it) {
      const int t_abs = w.start + pre + it;
      const CtlWindows cw = ctl_windows(seq, st, cfg, t_abs);
      Var out = predict_raw(model_, history, cw.ph, cw.f0, cw.loud);
      if (cfg.head == Head::mse) {
        losses.push_back(ad::mse_loss(out, norm_frame(seq, st, t_abs)));
        history.push_back(out);
      } else {
        Var prev_db = ad::affine_map(history.back(), st.env_sd, st.env_mean);
        losses.push_back(cgm_nll(out, prev_db, db_frame(seq, t_abs), cfg.sigma_min));
        Var fb = cgm_mixture_mean(out, prev_db);
        history.push_back(ad::affine_map(fb, 1.0 / st.env_sd, -st.env_mean / st.env_sd));
      }
      history.erase(history.begin());
    }
  }

  Var total = ad::scale(ad::sum_scalars(losses), 1.0 / static_cast<double>(losses.size()));
  const double loss = total.value().v[0];
  auto params = model_.param_vars();
  model_.zero_grads();
  ad::backward(total);
  apply_update(params, loss);
  return loss;
}

double Trainer::step_noise(const std::vector<Window>& batch, double sigma_db) {
  const ModelConfig& cfg = model_.cfg;
  const NormStats& st = model_.norm;
  const int W = cfg.env_window();
  const int pre = past_extent(cfg);
  const double sigma_norm = sigma_db / st.env_sd;
  std::vector<Var> losses;

  for (const Window& w : batch) {
    const FeatureSequence& seq = corpus_[static_cast<size_t>(w.phrase)];
    std::vector<Var> history;
    for (int i = 0; i < W; ++i) {
      Tensor fr = norm_frame(seq, st, w.start + pre - W + i);
      if (sigma_db > 0.0)
        for (double& x : fr.v) x += sigma_norm * noise_rng_.normal();
      history.push_back(ad::leaf(std::move(fr)));
    }
    const int t_abs = w.start + pre;
    const CtlWindows cw = ctl_windows(seq, st, cfg, t_abs);
    Var out = predict_raw(model_, history, cw.ph, cw.f0, cw.loud);
    if (cfg.head == Head::mse) {
      losses.push_back(ad::mse_loss(out, norm_frame(seq, st, t_abs)));
    } else {
      Var prev_db = ad::affine_map(history.back(), st.env_sd, st.env_mean);
      losses.push_back(cgm_nll(out, prev_db, db_frame(seq, t_abs), cfg.sigma_min));
    }
  }

  Var total = ad::scale(ad::sum_scalars(losses), 1.0 / static_cast<double>(losses.size()));
  const double loss = total.value().v[0];
  auto params = model_.param_vars();
  model_.zero_grads();
  ad::backward(total);
  apply_update(params, loss);
  return loss;
}

void Trainer::apply_update(const std::vector<Var>& params, double loss) {
  if (!std::isfinite(loss))
    throw std::runtime_error("training diverged: non-finite loss at update " +
                             std::to_string(state_.step + 1));
  if (cfg_.clip) {
    double sq = 0.0;
    for (const Var& p : params)
      if (p.has_grad())
        for (double g : p.node()->grad.v) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > cfg_.clip_norm && norm > 0.0) {
      const double s = cfg_.clip_norm / norm;
      for (const Var& p : params)
        if (p.has_grad())
          for (double& g : p.node()->grad.v) g *= s;
    }
  }
  auto mut = params;
  adam_step(mut, state_);
}

double Trainer::step(const std::vector<Window>& batch) {
  return cfg_.regime == Regime::iterated ? step_iterated(batch, cfg_.n_iter)
                                         : step_noise(batch, cfg_.sigma_db);
}

void Trainer::evaluate(int64_t update) {
  if (split_.test.empty()) return;
  EvalOptions opt;
  opt.phrase_cap = cfg_.eval_phrase_cap;
  opt.frame_stride = cfg_.eval_frame_stride;
  EvalRecord rec;
  rec.update = update;
  rec.tf_mse_db2 = eval_teacher_forced(model_, corpus_, split_.test, opt);
  std::vector<int> drift_ids = split_.test;
  if (cfg_.eval_drift_phrases > 0 &&
      static_cast<int>(drift_ids.size()) > cfg_.eval_drift_phrases)
    drift_ids.resize(static_cast<size_t>(cfg_.eval_drift_phrases));
  const std::vector<double> curve =
      free_run_drift(model_, corpus_, drift_ids, cfg_.eval_drift_horizon);
  rec.drift_db = curve.back();
  log_.evals.push_back(rec);
  if (!cfg_.checkpoint_dir.empty()) {
    std::filesystem::create_directories(cfg_.checkpoint_dir);
    save_model(model_, cfg_.checkpoint_dir + "/ckpt_" + std::to_string(update));
  }
}

void Trainer::run(int64_t n) {
  while (n > 0 && state_.step < cfg_.max_updates) {
    auto batch = next_batch();
    const double lr_now = state_.lr();
    const double loss = step(batch);
    log_.updates.push_back({state_.step, lr_now, loss});
    if (cfg_.eval_every > 0 && state_.step % cfg_.eval_every == 0) evaluate(state_.step);
    --n;
  }
}

double Trainer::last_eval_tf() const {
  if (log_.evals.empty()) throw std::runtime_error("no evaluation has run yet");
  return log_.evals.back().tf_mse_db2;
}

RunLog train(Model& model, const std::vector<FeatureSequence>& corpus, const TrainConfig& cfg) {
  Trainer tr(model, corpus, cfg);
  tr.run(cfg.max_updates);
  if (!cfg.checkpoint_dir.empty()) {
    std::filesystem::create_directories(cfg.checkpoint_dir);
    save_model(model, cfg.checkpoint_dir + "/final");
  }
  return tr.log();
}

}  // namespace envpred
