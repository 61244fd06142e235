#include "envpred/stats.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace envpred {

ScoreSet load_scores(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open score file " + path);
  ScoreSet s;
  s.label = path;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ss(line);
    double x;
    if (ss >> x) {
      s.scores.push_back(x);
      std::string rest;
      if (ss >> rest)
        throw std::runtime_error("malformed score line " + std::to_string(lineno) + " in " + path);
    }
  }
  if (s.scores.empty()) throw std::runtime_error("score file " + path + " contains no scores");
  return s;
}

void check_score_range(const ScoreSet& s, double lo, double hi) {
  for (double x : s.scores)
    if (x < lo || x > hi)
      throw std::runtime_error("score " + std::to_string(x) + " outside declared range [" +
                               std::to_string(lo) + "," + std::to_string(hi) + "]");
}

namespace {

double beta_cf(double a, double b, double x) {
  // Lentz's algorithm for the continued fraction of I_x(a,b)
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw std::runtime_error("incomplete beta continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x < 0.0 || x > 1.0) throw std::invalid_argument("incomplete beta needs x in [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log(1.0 - x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - std::exp(std::lgamma(a + b) - std::lgamma(b) - std::lgamma(a) +
                        b * std::log(1.0 - x) + a * std::log(x)) *
                   beta_cf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
  if (df <= 0.0) throw std::invalid_argument("degrees of freedom must be positive");
  if (t == 0.0) return 0.5;
  const double x = df / (df + t * t);
  const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x);
  return t > 0.0 ? 1.0 - tail : tail;
}

double student_t_quantile(double p, double df) {
  if (p <= 0.0 || p >= 1.0) throw std::invalid_argument("quantile needs p in (0,1)");
  double lo = -1e3, hi = 1e3;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (student_t_cdf(mid, df) < p)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-12) break;
  }
  return 0.5 * (lo + hi);
}

namespace {

struct MeanSd {
  double mean = 0.0, sd = 0.0;
  int n = 0;
};

MeanSd sample_stats(const ScoreSet& s, const char* what) {
  MeanSd r;
  r.n = static_cast<int>(s.scores.size());
  if (r.n < 2) throw std::invalid_argument(std::string(what) + " needs at least 2 scores");
  double acc = 0.0;
  for (double x : s.scores) acc += x;
  r.mean = acc / r.n;
  double var = 0.0;
  for (double x : s.scores) var += (x - r.mean) * (x - r.mean);
  var /= (r.n - 1);
  r.sd = std::sqrt(var);
  if (r.sd <= 0.0)
    throw std::runtime_error(std::string(what) + ": all scores are equal, sample sd is zero");
  return r;
}

}  // namespace

TTestResult one_sided_t_test(const ScoreSet& s) {
  const MeanSd m = sample_stats(s, "t-test");
  TTestResult r;
  r.n = m.n;
  r.mean = m.mean;
  r.t = m.mean / (m.sd / std::sqrt(static_cast<double>(m.n)));
  r.p = 1.0 - student_t_cdf(r.t, static_cast<double>(m.n - 1));
  return r;
}

MosSummary mos_summary(const ScoreSet& s, double alpha) {
  if (alpha <= 0.0 || alpha >= 1.0) throw std::invalid_argument("alpha must be in (0,1)");
  const MeanSd m = sample_stats(s, "mos summary");
  MosSummary r;
  r.n = m.n;
  r.mean = m.mean;
  const double tq = student_t_quantile(1.0 - alpha / 2.0, static_cast<double>(m.n - 1));
  r.half_width = tq * m.sd / std::sqrt(static_cast<double>(m.n));
  return r;
}

}  // namespace envpred
