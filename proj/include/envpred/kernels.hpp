#pragma once

#include <cstdint>

namespace envpred::kernels {

// Geometry of one dilated 2d convolution over a [T, F, Cin] input with
// weights laid out [kt, kf, Cin, Cout]. Zero padding is applied to the
// frequency axis only (pad_f_lo zeros below bin 0); the time axis is never
// padded.
struct ConvDims {
  int T = 0, F = 0, Cin = 0;
  int kt = 1, kf = 1, dt = 1, df = 1;
  int pad_f_lo = 0, pad_f_total = 0;
  int Cout = 0;
  int Tout = 0, Fout = 0;
};

// Computes output extents and the frequency padding split. Throws
// std::invalid_argument when the input is too short for the receptive extent.
ConvDims make_conv_dims(int T, int F, int Cin, int kt, int kf, int dt, int df,
                        bool same_frequency, int Cout);

// out = conv(in, w); out is overwritten
void conv2d_forward(const double* in, const double* w, double* out, const ConvDims& d);
// gin += dL/din given dL/dout
void conv2d_grad_input(const double* gout, const double* w, double* gin, const ConvDims& d);
// gw += dL/dw given dL/dout
void conv2d_grad_weights(const double* in, const double* gout, double* gw, const ConvDims& d);

// out[N,O] = a[N,I] . w[I,O]; out is overwritten
void matmul(const double* a, const double* w, double* out, int N, int I, int O);
// ga[N,I] += gout[N,O] . w^T
void matmul_acc_a(const double* gout, const double* w, double* ga, int N, int I, int O);
// gw[I,O] += a^T . gout
void matmul_acc_w(const double* a, const double* gout, double* gw, int N, int I, int O);

// Plain single-threaded reference implementations. The parallel kernels above
// must match these bit-for-bit: every output element accumulates its terms in
// the same order, so thread count cannot change results.
namespace serial {
void conv2d_forward(const double* in, const double* w, double* out, const ConvDims& d);
void conv2d_grad_input(const double* gout, const double* w, double* gin, const ConvDims& d);
void conv2d_grad_weights(const double* in, const double* gout, double* gw, const ConvDims& d);
void matmul(const double* a, const double* w, double* out, int N, int I, int O);
void matmul_acc_a(const double* gout, const double* w, double* ga, int N, int I, int O);
void matmul_acc_w(const double* a, const double* gout, double* gw, int N, int I, int O);
}  // namespace serial

}  // namespace envpred::kernels
