#include "envpred/cgm.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace envpred {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;

void check_raw(const Tensor& raw, const Tensor& prev) {
  if (raw.rank() != 2 || raw.dim(1) % 3 != 0)
    throw std::invalid_argument("mixture head output must be [bins,3K], got " + shape_str(raw.shape));
  if (prev.size() != raw.dim(0))
    throw std::invalid_argument("previous frame size does not match mixture bins");
}

void softmax_row(const double* logits, double* out, int K) {
  double mx = logits[0];
  for (int k = 1; k < K; ++k) mx = std::max(mx, logits[k]);
  double sum = 0.0;
  for (int k = 0; k < K; ++k) {
    out[k] = std::exp(logits[k] - mx);
    sum += out[k];
  }
  for (int k = 0; k < K; ++k) out[k] /= sum;
}

}  // namespace

CGMParams cgm_params_from_raw(const Tensor& raw, const Tensor& prev, double sigma_min) {
  check_raw(raw, prev);
  check_finite(raw, "mixture parameters");
  const int nb = raw.dim(0);
  const int K = raw.dim(1) / 3;
  CGMParams p;
  p.n_bins = nb;
  p.K = K;
  p.sigma_min = sigma_min;
  p.weights.resize(static_cast<size_t>(nb) * K);
  p.means.resize(static_cast<size_t>(nb) * K);
  p.sigmas.resize(static_cast<size_t>(nb) * K);
  for (int f = 0; f < nb; ++f) {
    const double* row = raw.data() + static_cast<int64_t>(f) * 3 * K;
    softmax_row(row, p.weights.data() + static_cast<int64_t>(f) * K, K);
    for (int k = 0; k < K; ++k) {
      p.means[static_cast<size_t>(f) * K + k] = prev.v[static_cast<size_t>(f)] + row[K + k];
      p.sigmas[static_cast<size_t>(f) * K + k] = sigma_min + std::exp(row[2 * K + k]);
    }
  }
  return p;
}

Tensor cgm_sample(const CGMParams& params, double tau, Rng& rng) {
  if (tau < 0.0) throw std::invalid_argument("temperature must be >= 0");
  const int nb = params.n_bins, K = params.K;
  Tensor out({nb});
  if (tau == 0.0) {
    for (int f = 0; f < nb; ++f) {
      int best = 0;
      for (int k = 1; k < K; ++k)
        if (params.weights[static_cast<size_t>(f) * K + k] >
            params.weights[static_cast<size_t>(f) * K + best])
          best = k;
      out.v[static_cast<size_t>(f)] = params.means[static_cast<size_t>(f) * K + best];
    }
    return out;
  }
  std::vector<double> sharp(static_cast<size_t>(K));
  for (int f = 0; f < nb; ++f) {
    const double* w = params.weights.data() + static_cast<int64_t>(f) * K;
    double sum = 0.0;
    for (int k = 0; k < K; ++k) {
      sharp[static_cast<size_t>(k)] = std::pow(w[k], 1.0 / tau);
      sum += sharp[static_cast<size_t>(k)];
    }
    const double u = rng.uniform01() * sum;
    int pick = K - 1;
    double cum = 0.0;
    for (int k = 0; k < K; ++k) {
      cum += sharp[static_cast<size_t>(k)];
      if (u < cum) {
        pick = k;
        break;
      }
    }
    const double mu = params.means[static_cast<size_t>(f) * K + pick];
    const double sd = tau * params.sigmas[static_cast<size_t>(f) * K + pick];
    out.v[static_cast<size_t>(f)] = rng.normal(mu, sd);
  }
  return out;
}

ad::Var cgm_nll(const ad::Var& raw, const ad::Var& prev, const Tensor& target, double sigma_min) {
  const Tensor& rv = raw.value();
  const Tensor& pv = prev.value();
  check_raw(rv, pv);
  if (target.size() != rv.dim(0))
    throw std::invalid_argument("target frame size does not match mixture bins");
  check_finite(rv, "mixture parameters");
  const int nb = rv.dim(0);
  const int K = rv.dim(1) / 3;

  // forward: nll = -(1/nb) sum_f logsumexp_k(log w_k + log N(x | mu_k, s_k))
  double total = 0.0;
  for (int f = 0; f < nb; ++f) {
    const double* row = rv.data() + static_cast<int64_t>(f) * 3 * K;
    double lmax = -1e300, lsew = -1e300;
    // log-softmax denominator
    double lg_mx = row[0];
    for (int k = 1; k < K; ++k) lg_mx = std::max(lg_mx, row[k]);
    double lg_sum = 0.0;
    for (int k = 0; k < K; ++k) lg_sum += std::exp(row[k] - lg_mx);
    const double log_norm = lg_mx + std::log(lg_sum);
    double a[64];
    for (int k = 0; k < K; ++k) {
      const double mu = pv.v[static_cast<size_t>(f)] + row[K + k];
      const double sg = sigma_min + std::exp(row[2 * K + k]);
      const double z = (target.v[static_cast<size_t>(f)] - mu) / sg;
      a[k] = (row[k] - log_norm) - 0.5 * z * z - std::log(sg) - 0.5 * kLogTwoPi;
      lmax = std::max(lmax, a[k]);
    }
    double se = 0.0;
    for (int k = 0; k < K; ++k) se += std::exp(a[k] - lmax);
    lsew = lmax + std::log(se);
    total -= lsew;
  }
  Tensor out = Tensor::scalar(total / nb);

  auto node = std::make_shared<ad::Node>();
  node->value = std::move(out);
  node->parents = {raw.node(), prev.node()};
  node->requires_grad = raw.node()->requires_grad || prev.node()->requires_grad;
  if (node->requires_grad) {
    ad::NodePtr rn = raw.node(), pn = prev.node();
    Tensor tgt = target;
    node->backprop = [rn, pn, tgt, nb, K, sigma_min](ad::Node& self) {
      const double go = self.grad.v[0] * (-1.0 / nb);  // d(nll)/d(logsumexp_f)
      const Tensor& rv = rn->value;
      const Tensor& pv = pn->value;
      Tensor* gr = rn->requires_grad ? &rn->ensure_grad() : nullptr;
      Tensor* gp = pn->requires_grad ? &pn->ensure_grad() : nullptr;
      std::vector<double> w(static_cast<size_t>(K)), r(static_cast<size_t>(K));
      for (int f = 0; f < nb; ++f) {
        const double* row = rv.data() + static_cast<int64_t>(f) * 3 * K;
        softmax_row(row, w.data(), K);
        double a[64];
        double lmax = -1e300;
        for (int k = 0; k < K; ++k) {
          const double mu = pv.v[static_cast<size_t>(f)] + row[K + k];
          const double sg = sigma_min + std::exp(row[2 * K + k]);
          const double z = (tgt.v[static_cast<size_t>(f)] - mu) / sg;
          a[k] = std::log(w[static_cast<size_t>(k)]) - 0.5 * z * z - std::log(sg) - 0.5 * kLogTwoPi;
          lmax = std::max(lmax, a[k]);
        }
        double se = 0.0;
        for (int k = 0; k < K; ++k) {
          r[static_cast<size_t>(k)] = std::exp(a[k] - lmax);
          se += r[static_cast<size_t>(k)];
        }
        for (int k = 0; k < K; ++k) r[static_cast<size_t>(k)] /= se;  // responsibilities

        double prev_acc = 0.0;
        for (int k = 0; k < K; ++k) {
          const double mu = pv.v[static_cast<size_t>(f)] + row[K + k];
          const double ex = std::exp(row[2 * K + k]);
          const double sg = sigma_min + ex;
          const double diff = tgt.v[static_cast<size_t>(f)] - mu;
          const double rk = r[static_cast<size_t>(k)];
          if (gr) {
            double* grow = gr->data() + static_cast<int64_t>(f) * 3 * K;
            grow[k] += go * (rk - w[static_cast<size_t>(k)]);
            grow[K + k] += go * rk * diff / (sg * sg);
            grow[2 * K + k] += go * rk * (diff * diff / (sg * sg * sg) - 1.0 / sg) * ex;
          }
          prev_acc += rk * diff / (sg * sg);
        }
        if (gp) gp->v[static_cast<size_t>(f)] += go * prev_acc;
      }
    };
  }
  return ad::Var(node);
}

ad::Var cgm_mixture_mean(const ad::Var& raw, const ad::Var& prev) {
  const Tensor& rv = raw.value();
  const Tensor& pv = prev.value();
  check_raw(rv, pv);
  const int nb = rv.dim(0);
  const int K = rv.dim(1) / 3;

  Tensor out({nb});
  std::vector<double> w(static_cast<size_t>(K));
  for (int f = 0; f < nb; ++f) {
    const double* row = rv.data() + static_cast<int64_t>(f) * 3 * K;
    softmax_row(row, w.data(), K);
    double acc = pv.v[static_cast<size_t>(f)];
    for (int k = 0; k < K; ++k) acc += w[static_cast<size_t>(k)] * row[K + k];
    out.v[static_cast<size_t>(f)] = acc;
  }

  auto node = std::make_shared<ad::Node>();
  node->value = std::move(out);
  node->parents = {raw.node(), prev.node()};
  node->requires_grad = raw.node()->requires_grad || prev.node()->requires_grad;
  if (node->requires_grad) {
    ad::NodePtr rn = raw.node(), pn = prev.node();
    node->backprop = [rn, pn, nb, K](ad::Node& self) {
      const Tensor& rv = rn->value;
      Tensor* gr = rn->requires_grad ? &rn->ensure_grad() : nullptr;
      Tensor* gp = pn->requires_grad ? &pn->ensure_grad() : nullptr;
      std::vector<double> w(static_cast<size_t>(K));
      for (int f = 0; f < nb; ++f) {
        const double go = self.grad.v[static_cast<size_t>(f)];
        const double* row = rv.data() + static_cast<int64_t>(f) * 3 * K;
        softmax_row(row, w.data(), K);
        if (gr) {
          double* grow = gr->data() + static_cast<int64_t>(f) * 3 * K;
          double wo = 0.0;
          for (int k = 0; k < K; ++k) wo += w[static_cast<size_t>(k)] * row[K + k];
          for (int k = 0; k < K; ++k) {
            grow[k] += go * w[static_cast<size_t>(k)] * (row[K + k] - wo);
            grow[K + k] += go * w[static_cast<size_t>(k)];
          }
        }
        if (gp) gp->v[static_cast<size_t>(f)] += go;
      }
    };
  }
  return ad::Var(node);
}

}  // namespace envpred
