#include "envpred/kernels.hpp"

#include <cstring>
#include <stdexcept>
#include <string>

namespace envpred::kernels {

ConvDims make_conv_dims(int T, int F, int Cin, int kt, int kf, int dt, int df,
                        bool same_frequency, int Cout) {
  if (kt < 1 || kf < 1 || dt < 1 || df < 1)
    throw std::invalid_argument("conv kernel and dilation extents must be >= 1");
  ConvDims d;
  d.T = T;
  d.F = F;
  d.Cin = Cin;
  d.kt = kt;
  d.kf = kf;
  d.dt = dt;
  d.df = df;
  d.Cout = Cout;
  const int span_t = dt * (kt - 1) + 1;
  if (T < span_t)
    throw std::invalid_argument("conv input time extent " + std::to_string(T) +
                                " shorter than receptive extent " + std::to_string(span_t));
  d.Tout = T - dt * (kt - 1);
  if (same_frequency) {
    d.pad_f_total = df * (kf - 1);
    d.pad_f_lo = d.pad_f_total / 2;
    d.Fout = F;
  } else {
    const int span_f = df * (kf - 1) + 1;
    if (F < span_f)
      throw std::invalid_argument("conv input frequency extent " + std::to_string(F) +
                                  " shorter than receptive extent " + std::to_string(span_f));
    d.pad_f_total = 0;
    d.pad_f_lo = 0;
    d.Fout = F - df * (kf - 1);
  }
  return d;
}

// ---- parallel kernels ------------------------------------------------------
//
// Per output element the reduction order is fixed (jt, jf, ci ascending for
// the forward pass), matching the serial reference exactly; OpenMP only
// distributes independent output elements.

void conv2d_forward(const double* in, const double* w, double* out, const ConvDims& d) {
  const int64_t work = static_cast<int64_t>(d.Tout) * d.Fout * d.kt * d.kf * d.Cin * d.Cout;
#pragma omp parallel for collapse(2) schedule(static) if (work > 1 << 15)
  for (int t = 0; t < d.Tout; ++t) {
    for (int f = 0; f < d.Fout; ++f) {
      double* __restrict orow = out + (static_cast<int64_t>(t) * d.Fout + f) * d.Cout;
      for (int co = 0; co < d.Cout; ++co) orow[co] = 0.0;
      for (int jt = 0; jt < d.kt; ++jt) {
        const int ti = t + jt * d.dt;
        for (int jf = 0; jf < d.kf; ++jf) {
          const int fi = f + jf * d.df - d.pad_f_lo;
          if (fi < 0 || fi >= d.F) continue;
          const double* __restrict irow = in + (static_cast<int64_t>(ti) * d.F + fi) * d.Cin;
          const double* __restrict wplane = w + (static_cast<int64_t>(jt) * d.kf + jf) * d.Cin * d.Cout;
          for (int ci = 0; ci < d.Cin; ++ci) {
            const double xv = irow[ci];
            const double* __restrict wrow = wplane + static_cast<int64_t>(ci) * d.Cout;
            for (int co = 0; co < d.Cout; ++co) orow[co] += xv * wrow[co];
          }
        }
      }
    }
  }
}

void conv2d_grad_input(const double* gout, const double* w, double* gin, const ConvDims& d) {
  const int64_t work = static_cast<int64_t>(d.T) * d.F * d.kt * d.kf * d.Cin * d.Cout;
#pragma omp parallel for collapse(2) schedule(static) if (work > 1 << 15)
  for (int ti = 0; ti < d.T; ++ti) {
    for (int fi = 0; fi < d.F; ++fi) {
      double* grow = gin + (static_cast<int64_t>(ti) * d.F + fi) * d.Cin;
      for (int jt = 0; jt < d.kt; ++jt) {
        const int t = ti - jt * d.dt;
        if (t < 0 || t >= d.Tout) continue;
        for (int jf = 0; jf < d.kf; ++jf) {
          const int f = fi - jf * d.df + d.pad_f_lo;
          if (f < 0 || f >= d.Fout) continue;
          const double* __restrict gorow = gout + (static_cast<int64_t>(t) * d.Fout + f) * d.Cout;
          const double* __restrict wplane = w + (static_cast<int64_t>(jt) * d.kf + jf) * d.Cin * d.Cout;
          for (int ci = 0; ci < d.Cin; ++ci) {
            const double* __restrict wrow = wplane + static_cast<int64_t>(ci) * d.Cout;
            double acc = 0.0;
            for (int co = 0; co < d.Cout; ++co) acc += gorow[co] * wrow[co];
            grow[ci] += acc;
          }
        }
      }
    }
  }
}

void conv2d_grad_weights(const double* in, const double* gout, double* gw, const ConvDims& d) {
  const int64_t slots = static_cast<int64_t>(d.kt) * d.kf * d.Cin;
  const int64_t work = slots * d.Tout * d.Fout * d.Cout;
#pragma omp parallel for schedule(static) if (work > 1 << 15)
  for (int64_t slot = 0; slot < slots; ++slot) {
    const int ci = static_cast<int>(slot % d.Cin);
    const int jf = static_cast<int>((slot / d.Cin) % d.kf);
    const int jt = static_cast<int>(slot / (static_cast<int64_t>(d.Cin) * d.kf));
    double* __restrict gwrow = gw + slot * d.Cout;
    for (int t = 0; t < d.Tout; ++t) {
      const int ti = t + jt * d.dt;
      for (int f = 0; f < d.Fout; ++f) {
        const int fi = f + jf * d.df - d.pad_f_lo;
        if (fi < 0 || fi >= d.F) continue;
        const double xv = in[(static_cast<int64_t>(ti) * d.F + fi) * d.Cin + ci];
        const double* __restrict gorow = gout + (static_cast<int64_t>(t) * d.Fout + f) * d.Cout;
        for (int co = 0; co < d.Cout; ++co) gwrow[co] += xv * gorow[co];
      }
    }
  }
}

void matmul(const double* a, const double* w, double* out, int N, int I, int O) {
  const int64_t work = static_cast<int64_t>(N) * I * O;
#pragma omp parallel for schedule(static) if (work > 1 << 15)
  for (int n = 0; n < N; ++n) {
    double* __restrict orow = out + static_cast<int64_t>(n) * O;
    for (int o = 0; o < O; ++o) orow[o] = 0.0;
    const double* __restrict arow = a + static_cast<int64_t>(n) * I;
    for (int i = 0; i < I; ++i) {
      const double av = arow[i];
      const double* __restrict wrow = w + static_cast<int64_t>(i) * O;
      for (int o = 0; o < O; ++o) orow[o] += av * wrow[o];
    }
  }
}

void matmul_acc_a(const double* gout, const double* w, double* ga, int N, int I, int O) {
  const int64_t work = static_cast<int64_t>(N) * I * O;
#pragma omp parallel for schedule(static) if (work > 1 << 15)
  for (int n = 0; n < N; ++n) {
    const double* gorow = gout + static_cast<int64_t>(n) * O;
    double* garow = ga + static_cast<int64_t>(n) * I;
    for (int i = 0; i < I; ++i) {
      const double* wrow = w + static_cast<int64_t>(i) * O;
      double acc = 0.0;
      for (int o = 0; o < O; ++o) acc += gorow[o] * wrow[o];
      garow[i] += acc;
    }
  }
}

void matmul_acc_w(const double* a, const double* gout, double* gw, int N, int I, int O) {
  const int64_t work = static_cast<int64_t>(N) * I * O;
#pragma omp parallel for schedule(static) if (work > 1 << 15)
  for (int i = 0; i < I; ++i) {
    double* gwrow = gw + static_cast<int64_t>(i) * O;
    for (int n = 0; n < N; ++n) {
      const double av = a[static_cast<int64_t>(n) * I + i];
      const double* gorow = gout + static_cast<int64_t>(n) * O;
      for (int o = 0; o < O; ++o) gwrow[o] += av * gorow[o];
    }
  }
}

// ---- serial reference ------------------------------------------------------

namespace serial {

void conv2d_forward(const double* in, const double* w, double* out, const ConvDims& d) {
  for (int t = 0; t < d.Tout; ++t) {
    for (int f = 0; f < d.Fout; ++f) {
      for (int co = 0; co < d.Cout; ++co) {
        double acc = 0.0;
        for (int jt = 0; jt < d.kt; ++jt) {
          const int ti = t + jt * d.dt;
          for (int jf = 0; jf < d.kf; ++jf) {
            const int fi = f + jf * d.df - d.pad_f_lo;
            if (fi < 0 || fi >= d.F) continue;
            for (int ci = 0; ci < d.Cin; ++ci) {
              acc += in[(static_cast<int64_t>(ti) * d.F + fi) * d.Cin + ci] *
                     w[((static_cast<int64_t>(jt) * d.kf + jf) * d.Cin + ci) * d.Cout + co];
            }
          }
        }
        out[(static_cast<int64_t>(t) * d.Fout + f) * d.Cout + co] = acc;
      }
    }
  }
}

// The gradient kernels accumulate with the same grouping as the parallel
// versions (one dot-product sub-sum per tap for gin, one raw add per output
// position for gw) so the pair stays bit-identical on any accumulator state.
void conv2d_grad_input(const double* gout, const double* w, double* gin, const ConvDims& d) {
  for (int ti = 0; ti < d.T; ++ti) {
    for (int fi = 0; fi < d.F; ++fi) {
      double* grow = gin + (static_cast<int64_t>(ti) * d.F + fi) * d.Cin;
      for (int jt = 0; jt < d.kt; ++jt) {
        const int t = ti - jt * d.dt;
        if (t < 0 || t >= d.Tout) continue;
        for (int jf = 0; jf < d.kf; ++jf) {
          const int f = fi - jf * d.df + d.pad_f_lo;
          if (f < 0 || f >= d.Fout) continue;
          const double* gorow = gout + (static_cast<int64_t>(t) * d.Fout + f) * d.Cout;
          for (int ci = 0; ci < d.Cin; ++ci) {
            double acc = 0.0;
            for (int co = 0; co < d.Cout; ++co) {
              acc += gorow[co] *
                     w[((static_cast<int64_t>(jt) * d.kf + jf) * d.Cin + ci) * d.Cout + co];
            }
            grow[ci] += acc;
          }
        }
      }
    }
  }
}

void conv2d_grad_weights(const double* in, const double* gout, double* gw, const ConvDims& d) {
  for (int jt = 0; jt < d.kt; ++jt) {
    for (int jf = 0; jf < d.kf; ++jf) {
      for (int ci = 0; ci < d.Cin; ++ci) {
        double* gwrow = gw + ((static_cast<int64_t>(jt) * d.kf + jf) * d.Cin + ci) * d.Cout;
        for (int t = 0; t < d.Tout; ++t) {
          const int ti = t + jt * d.dt;
          for (int f = 0; f < d.Fout; ++f) {
            const int fi = f + jf * d.df - d.pad_f_lo;
            if (fi < 0 || fi >= d.F) continue;
            const double xv = in[(static_cast<int64_t>(ti) * d.F + fi) * d.Cin + ci];
            const double* gorow = gout + (static_cast<int64_t>(t) * d.Fout + f) * d.Cout;
            for (int co = 0; co < d.Cout; ++co) gwrow[co] += xv * gorow[co];
          }
        }
      }
    }
  }
}

void matmul(const double* a, const double* w, double* out, int N, int I, int O) {
  for (int n = 0; n < N; ++n) {
    for (int o = 0; o < O; ++o) {
      double acc = 0.0;
      for (int i = 0; i < I; ++i) acc += a[static_cast<int64_t>(n) * I + i] * w[static_cast<int64_t>(i) * O + o];
      out[static_cast<int64_t>(n) * O + o] = acc;
    }
  }
}

void matmul_acc_a(const double* gout, const double* w, double* ga, int N, int I, int O) {
  for (int n = 0; n < N; ++n) {
    for (int i = 0; i < I; ++i) {
      double acc = 0.0;
      for (int o = 0; o < O; ++o) acc += gout[static_cast<int64_t>(n) * O + o] * w[static_cast<int64_t>(i) * O + o];
      ga[static_cast<int64_t>(n) * I + i] += acc;
    }
  }
}

void matmul_acc_w(const double* a, const double* gout, double* gw, int N, int I, int O) {
  for (int i = 0; i < I; ++i) {
    double* gwrow = gw + static_cast<int64_t>(i) * O;
    for (int n = 0; n < N; ++n) {
      const double av = a[static_cast<int64_t>(n) * I + i];
      const double* gorow = gout + static_cast<int64_t>(n) * O;
      for (int o = 0; o < O; ++o) gwrow[o] += av * gorow[o];
    }
  }
}

}  // namespace serial

}  // namespace envpred::kernels
