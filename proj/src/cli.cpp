#include "envpred/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "envpred/eval.hpp"
#include "envpred/features.hpp"
#include "envpred/model.hpp"
#include "envpred/stats.hpp"
#include "envpred/train.hpp"

namespace envpred {

namespace fs = std::filesystem;

namespace {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

struct ModelPreset {
  Variant variant;
  Head head;
  Regime regime;
};

ModelPreset model_preset(const std::string& name) {
  if (name == "bb1") return {Variant::bb1, Head::cgm, Regime::noise};
  if (name == "bb2") return {Variant::bb2, Head::cgm, Regime::noise};
  if (name == "mse") return {Variant::proposed, Head::mse, Regime::iterated};
  if (name == "cgm") return {Variant::proposed, Head::cgm, Regime::iterated};
  if (name == "iter") return {Variant::proposed, Head::mse, Regime::iterated};
  if (name == "noise") return {Variant::proposed, Head::mse, Regime::noise};
  throw CLI::ValidationError("--model", "unknown model '" + name +
                                            "' (expected bb1|bb2|mse|cgm|iter|noise)");
}

void apply_size_preset(ModelConfig& cfg, const std::string& preset) {
  if (preset == "paper") return;
  if (preset == "small") {
    cfg.time_channels = 8;
    cfg.growth = 8;
    cfg.bottleneck = 16;
    cfg.bb1_channels = 64;
    cfg.bb2_channels = 24;
    return;
  }
  throw CLI::ValidationError("--preset", "unknown preset '" + preset + "'");
}

int cmd_synth_data(const std::string& out_dir, int phrases, int frames, uint64_t seed, int vocab) {
  fs::create_directories(out_dir);
  ToySingerConfig cfg = make_toy_config(seed, vocab);
  cfg.seed = seed;
  const auto corpus = synth_corpus(cfg, phrases, frames);
  std::vector<std::string> names;
  for (size_t i = 0; i < corpus.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "phrase_%04zu.fsq", i);
    write_feature_file(corpus[i], (fs::path(out_dir) / buf).string());
    names.push_back(buf);
  }
  write_manifest(names, (fs::path(out_dir) / "manifest.txt").string());
  std::cout << "phrases=" << phrases << " frames=" << frames << " vocab=" << vocab
            << " seed=" << seed << "\n";
  std::cout << "manifest=" << (fs::path(out_dir) / "manifest.txt").string() << "\n";
  return 0;
}

}  // namespace

int cli_run(const std::vector<std::string>& args) {
  CLI::App app{"autoregressive spectral-envelope prediction engine"};
  app.require_subcommand(1);

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "generate the synthetic singer corpus");
  std::string sd_out = "data";
  int sd_phrases = 100, sd_frames = 400, sd_vocab = 10;
  uint64_t sd_seed = 0;
  synth->add_option("--out", sd_out, "output directory");
  synth->add_option("--phrases", sd_phrases, "number of phrases");
  synth->add_option("--frames", sd_frames, "frames per phrase");
  synth->add_option("--vocab", sd_vocab, "phoneme vocabulary size");
  synth->add_option("--seed", sd_seed, "corpus seed");

  // train
  auto* tr = app.add_subcommand("train", "train one model of the ablation matrix");
  std::string tr_model = "iter", tr_data, tr_out = "run", tr_preset = "paper";
  uint64_t tr_seed = 1;
  int64_t tr_updates = 1000, tr_eval_every = 100;
  int tr_niter = 24, tr_batch = 16;
  double tr_sigma = 12.0;
  bool tr_noclip = false;
  ModelConfig tr_cfg;
  tr->add_option("--model", tr_model, "bb1|bb2|mse|cgm|iter|noise")->required();
  tr->add_option("--data", tr_data, "corpus manifest")->required();
  tr->add_option("--out", tr_out, "run directory");
  tr->add_option("--seed", tr_seed, "training seed");
  tr->add_option("--updates", tr_updates, "number of updates");
  tr->add_option("--eval-every", tr_eval_every, "evaluation cadence (0 = never)");
  tr->add_option("--n-iter", tr_niter, "rollout length for the iterated regime");
  tr->add_option("--sigma-db", tr_sigma, "input noise sd in dB for the noise regime");
  tr->add_option("--batch", tr_batch, "minibatch size");
  tr->add_option("--preset", tr_preset, "size preset: paper|small");
  tr->add_option("--time-channels", tr_cfg.time_channels, "time-stack feature width");
  tr->add_option("--growth", tr_cfg.growth, "frequency-stack growth");
  tr->add_option("--bottleneck", tr_cfg.bottleneck, "bottleneck width");
  tr->add_option("--cgm-k", tr_cfg.cgm_k, "mixture components per bin");
  tr->add_flag("--no-clip", tr_noclip, "disable gradient-norm clipping");

  // generate
  auto* gen = app.add_subcommand("generate", "free-run generation for one phrase");
  std::string g_ckpt, g_data, g_out = "generated.fsq";
  int g_phrase = 0;
  double g_tau = 0.0;
  uint64_t g_seed = 0;
  gen->add_option("--ckpt", g_ckpt, "checkpoint prefix")->required();
  gen->add_option("--data", g_data, "corpus manifest")->required();
  gen->add_option("--phrase", g_phrase, "phrase index");
  gen->add_option("--tau", g_tau, "generation temperature (cgm head)");
  gen->add_option("--seed", g_seed, "sampling seed");
  gen->add_option("--out", g_out, "output feature file");

  // eval
  auto* ev = app.add_subcommand("eval", "teacher-forced error and free-run drift report");
  std::string e_ckpt, e_data, e_out;
  int e_horizon = 200, e_cap = 0, e_stride = 1;
  uint64_t e_seed = 0;
  ev->add_option("--ckpt", e_ckpt, "checkpoint prefix")->required();
  ev->add_option("--data", e_data, "corpus manifest")->required();
  ev->add_option("--horizon", e_horizon, "free-run drift horizon");
  ev->add_option("--phrase-cap", e_cap, "max test phrases (0 = all)");
  ev->add_option("--stride", e_stride, "teacher-forced frame stride");
  ev->add_option("--seed", e_seed, "unused; accepted for uniformity");
  ev->add_option("--out", e_out, "write the report here instead of stdout");

  // compare
  auto* cmp = app.add_subcommand("compare", "one-sided t-test on a preference score file");
  std::string c_file;
  uint64_t c_seed = 0;
  cmp->add_option("scores", c_file, "score file, one value per line")->required();
  cmp->add_option("--seed", c_seed, "unused; accepted for uniformity");

  // mos
  auto* mos = app.add_subcommand("mos", "mean opinion score with t confidence interval");
  std::string m_file;
  double m_alpha = 0.05;
  uint64_t m_seed = 0;
  mos->add_option("scores", m_file, "score file, one value per line")->required();
  mos->add_option("--alpha", m_alpha, "confidence level parameter");
  mos->add_option("--seed", m_seed, "unused; accepted for uniformity");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (synth->parsed())
      return cmd_synth_data(sd_out, sd_phrases, sd_frames, sd_seed, sd_vocab);

    if (tr->parsed()) {
      const ModelPreset mp = model_preset(tr_model);
      apply_size_preset(tr_cfg, tr_preset);
      const auto corpus = read_corpus(tr_data);
      tr_cfg.head = mp.head;
      tr_cfg.vocab = corpus.front().vocab;
      tr_cfg.n_bins = corpus.front().n_bins();
      Model model = build_model(tr_cfg, mp.variant, tr_seed);
      TrainConfig tc;
      tc.regime = mp.regime;
      tc.n_iter = tr_niter;
      tc.sigma_db = tr_sigma;
      tc.batch = tr_batch;
      tc.max_updates = tr_updates;
      tc.eval_every = tr_eval_every;
      tc.seed = tr_seed;
      tc.clip = !tr_noclip;
      tc.checkpoint_dir = tr_out;
      fs::create_directories(tr_out);
      const RunLog log = train(model, corpus, tc);
      write_runlog(log, (fs::path(tr_out) / "runlog.txt").string());
      std::cout << "model=" << tr_model << " variant=" << variant_name(model.variant)
                << " head=" << head_name(model.cfg.head)
                << " regime=" << (tc.regime == Regime::iterated ? "iterated" : "noise") << "\n";
      std::cout << "updates=" << log.updates.size() << " params=" << param_count(model) << "\n";
      if (!log.updates.empty()) std::cout << "final_loss=" << fmt(log.updates.back().loss) << "\n";
      if (!log.evals.empty())
        std::cout << "final_tf_mse_db2=" << fmt(log.evals.back().tf_mse_db2) << "\n";
      std::cout << "checkpoint=" << (fs::path(tr_out) / "final").string() << "\n";
      std::cout << "runlog=" << (fs::path(tr_out) / "runlog.txt").string() << "\n";
      return 0;
    }

    if (gen->parsed()) {
      const Model model = load_model(g_ckpt);
      const auto corpus = read_corpus(g_data);
      if (g_phrase < 0 || g_phrase >= static_cast<int>(corpus.size()))
        throw std::runtime_error("phrase index out of range");
      const FeatureSequence& seq = corpus[static_cast<size_t>(g_phrase)];
      const int W = model.cfg.env_window();
      GenerationRequest req;
      req.model = &model;
      req.phonemes = seq.phonemes;
      req.f0 = seq.f0;
      req.loudness = seq.loudness;
      req.seed_env = Tensor({W, model.cfg.n_bins});
      for (int i = 0; i < W; ++i)
        for (int f = 0; f < model.cfg.n_bins; ++f) req.seed_env.at2(i, f) = seq.envelopes.at2(i, f);
      req.tau = g_tau;
      req.rng_seed = g_seed;
      FeatureSequence out = seq;
      out.envelopes = generate(req);
      write_feature_file(out, g_out);
      std::cout << "phrase=" << g_phrase << " frames=" << out.length() << " tau=" << fmt(g_tau)
                << "\n";
      std::cout << "out=" << g_out << "\n";
      return 0;
    }

    if (ev->parsed()) {
      const Model model = load_model(e_ckpt);
      const auto corpus = read_corpus(e_data);
      const SplitIndices split = split_corpus(static_cast<int>(corpus.size()));
      if (split.test.empty()) throw std::runtime_error("test split is empty");
      EvalOptions opt;
      opt.phrase_cap = e_cap;
      opt.frame_stride = e_stride;
      const EvalReport rep = evaluate_model(model, corpus, split.test, e_horizon, opt);
      std::ostringstream os;
      os << "n_test_phrases=" << rep.per_phrase_mse_db2.size() << "\n";
      for (const auto& [pid, mse] : rep.per_phrase_mse_db2)
        os << "phrase_mse_db2 phrase=" << pid << " value=" << fmt(mse) << "\n";
      os << "tf_mse_db2=" << fmt(rep.mean_mse_db2) << "\n";
      os << "baseline_mse_db2=" << fmt(rep.baseline_mse_db2) << "\n";
      os << "mse_over_baseline=" << fmt(rep.mean_mse_db2 / rep.baseline_mse_db2) << "\n";
      for (size_t h = 0; h < rep.drift_db.size(); ++h)
        os << "drift_db horizon=" << h << " value=" << fmt(rep.drift_db[h]) << "\n";
      if (e_out.empty()) {
        std::cout << os.str();
      } else {
        std::ofstream f(e_out);
        if (!f) throw std::runtime_error("cannot open " + e_out + " for writing");
        f << os.str();
        std::cout << "report=" << e_out << "\n";
      }
      return 0;
    }

    if (cmp->parsed()) {
      const ScoreSet s = load_scores(c_file);
      check_score_range(s, -3.0, 3.0);
      const TTestResult r = one_sided_t_test(s);
      std::cout << "n=" << r.n << " mean=" << fmt(r.mean) << " t=" << fmt(r.t)
                << " p=" << fmt(r.p) << "\n";
      return 0;
    }

    if (mos->parsed()) {
      const ScoreSet s = load_scores(m_file);
      check_score_range(s, 1.0, 5.0);
      const MosSummary r = mos_summary(s, m_alpha);
      std::cout << "n=" << r.n << " mean=" << fmt(r.mean) << " half_width=" << fmt(r.half_width)
                << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace envpred
