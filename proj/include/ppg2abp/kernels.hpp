#pragma once

namespace ppg2abp::kernels {

// Valid (unpadded) 1D cross-correlation on contiguous buffers.
//   x: [batch, cin, lin]   w: [cout, cin, k]   y: [batch, cout, lout]
//   lout = (lin - k)/stride + 1, guaranteed by the caller.
struct ConvDims {
  int batch;
  int cin;
  int cout;
  int lin;
  int lout;
  int k;
  int stride;
};

struct Kernels {
  const char* name;
  // y = bias + x (*) w; overwrites y. bias may be null.
  void (*conv_fwd)(const double* x, const double* w, const double* bias, double* y,
                   const ConvDims& d);
  // gx += scatter of gy through w (adjoint of conv_fwd w.r.t. x).
  void (*conv_grad_input)(const double* gy, const double* w, double* gx, const ConvDims& d);
  // gw += correlation of x with gy; gb += per-channel sums of gy. gb may be null.
  void (*conv_grad_weights)(const double* x, const double* gy, double* gw, double* gb,
                            const ConvDims& d);
};

const Kernels& scalar_kernels();

// AVX2/FMA variant; null when the CPU lacks the instructions.
const Kernels* avx2_kernels();

// Runtime-selected variant. Defaults to the best supported; the
// PPG2ABP_KERNELS environment variable ("scalar" / "avx2") overrides.
const Kernels& active();

// Explicit override, mainly for tests. Throws ArgumentError on an unknown or
// unsupported name.
void select(const char* name);

}  // namespace ppg2abp::kernels
