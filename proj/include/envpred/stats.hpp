#pragma once

#include <string>
#include <vector>

namespace envpred {

struct ScoreSet {
  std::string label;
  std::vector<double> scores;
};

// Plain-text score files: one value per line, '#' starts a comment.
ScoreSet load_scores(const std::string& path);
// Throws unless every score lies in [lo, hi].
void check_score_range(const ScoreSet& s, double lo, double hi);

// Regularized incomplete beta I_x(a,b) by Lentz continued fraction,
// |error| < 1e-12 over the needed domain.
double incomplete_beta(double a, double b, double x);

// P(T <= t) for Student's t with df degrees of freedom.
double student_t_cdf(double t, double df);
// Smallest t with CDF(t) >= p, by bisection to 1e-12.
double student_t_quantile(double p, double df);

struct TTestResult {
  double mean = 0.0;
  double t = 0.0;
  double p = 0.0;  // P(T_{n-1} >= t), the one-sided upper tail
  int n = 0;
};

// One-sided one-sample test of mean > 0. Throws for n < 2 or zero variance.
TTestResult one_sided_t_test(const ScoreSet& s);

struct MosSummary {
  double mean = 0.0;
  double half_width = 0.0;  // two-sided (1 - alpha) t-interval half width
  int n = 0;
};

MosSummary mos_summary(const ScoreSet& s, double alpha = 0.05);

}  // namespace envpred
