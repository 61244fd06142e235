// Times the OpenMP kernels against the serial reference on shapes the
// training loop actually hits, and checks that both produce identical bits.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "envpred/kernels.hpp"
#include "envpred/rng.hpp"

using namespace envpred;
using Clock = std::chrono::steady_clock;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  std::vector<double> times;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    fn();
    const auto t1 = Clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

void fill(std::vector<double>& v, Rng& rng) {
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

void bench_conv(const char* label, int T, int F, int Cin, int kt, int kf, int dt, int df,
                bool same_f, int Cout, int reps) {
  const kernels::ConvDims d = kernels::make_conv_dims(T, F, Cin, kt, kf, dt, df, same_f, Cout);
  Rng rng(7);
  std::vector<double> in(static_cast<size_t>(T) * F * Cin), w(static_cast<size_t>(kt) * kf * Cin * Cout);
  fill(in, rng);
  fill(w, rng);
  std::vector<double> out_p(static_cast<size_t>(d.Tout) * d.Fout * Cout);
  std::vector<double> out_s(out_p.size());
  std::vector<double> gin_p(in.size(), 0.0), gin_s(in.size(), 0.0);
  std::vector<double> gw_p(w.size(), 0.0), gw_s(w.size(), 0.0);

  const double fwd_p = time_ms([&] { kernels::conv2d_forward(in.data(), w.data(), out_p.data(), d); }, reps);
  const double fwd_s = time_ms([&] { kernels::serial::conv2d_forward(in.data(), w.data(), out_s.data(), d); }, reps);
  const double gi_p = time_ms([&] {
    std::fill(gin_p.begin(), gin_p.end(), 0.0);
    kernels::conv2d_grad_input(out_p.data(), w.data(), gin_p.data(), d);
  }, reps);
  const double gi_s = time_ms([&] {
    std::fill(gin_s.begin(), gin_s.end(), 0.0);
    kernels::serial::conv2d_grad_input(out_s.data(), w.data(), gin_s.data(), d);
  }, reps);
  const double gw_pt = time_ms([&] {
    std::fill(gw_p.begin(), gw_p.end(), 0.0);
    kernels::conv2d_grad_weights(in.data(), out_p.data(), gw_p.data(), d);
  }, reps);
  const double gw_st = time_ms([&] {
    std::fill(gw_s.begin(), gw_s.end(), 0.0);
    kernels::serial::conv2d_grad_weights(in.data(), out_s.data(), gw_s.data(), d);
  }, reps);

  const bool ok = bits_equal(out_p, out_s) && bits_equal(gin_p, gin_s) && bits_equal(gw_p, gw_s);
  std::printf("%-28s fwd %7.3f / %7.3f ms (x%4.2f)  gin %7.3f / %7.3f (x%4.2f)  gw %7.3f / %7.3f (x%4.2f)  bits %s\n",
              label, fwd_p, fwd_s, fwd_s / fwd_p, gi_p, gi_s, gi_s / gi_p, gw_pt, gw_st,
              gw_st / gw_pt, ok ? "equal" : "DIFFER");
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("openmp threads: %d\n", omp_get_max_threads());
#else
  std::printf("openmp: disabled at build time\n");
#endif
  std::printf("%-28s %s\n", "kernel (parallel / serial)", "median over 7 reps");
  bench_conv("time conv 64x60x32->64", 64, 60, 32, 2, 1, 4, 1, false, 64, 7);
  bench_conv("time conv 16x60x64->128", 16, 60, 64, 2, 1, 8, 1, false, 128, 7);
  bench_conv("freq conv 1x60x64->16", 1, 60, 64, 1, 2, 1, 4, true, 16, 7);
  bench_conv("bb2 conv 16x60x64->128", 16, 60, 64, 2, 3, 2, 2, true, 128, 7);
  bench_conv("wide conv 128x60x16->32", 128, 60, 16, 2, 1, 2, 1, false, 32, 7);
  return 0;
}
