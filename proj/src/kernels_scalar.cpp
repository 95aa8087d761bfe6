#include "ppg2abp/kernels.hpp"

namespace ppg2abp::kernels {

namespace {

void conv_fwd_scalar(const double* x, const double* w, const double* bias, double* y,
                     const ConvDims& d) {
  for (int b = 0; b < d.batch; ++b) {
    for (int co = 0; co < d.cout; ++co) {
      double* yrow = y + (static_cast<long>(b) * d.cout + co) * d.lout;
      const double bias_v = bias ? bias[co] : 0.0;
      for (int t = 0; t < d.lout; ++t) yrow[t] = bias_v;
      for (int ci = 0; ci < d.cin; ++ci) {
        const double* xrow = x + (static_cast<long>(b) * d.cin + ci) * d.lin;
        const double* wrow = w + (static_cast<long>(co) * d.cin + ci) * d.k;
        for (int j = 0; j < d.k; ++j) {
          const double wv = wrow[j];
          for (int t = 0; t < d.lout; ++t) yrow[t] += wv * xrow[t * d.stride + j];
        }
      }
    }
  }
}

void conv_grad_input_scalar(const double* gy, const double* w, double* gx, const ConvDims& d) {
  for (int b = 0; b < d.batch; ++b) {
    for (int co = 0; co < d.cout; ++co) {
      const double* gyrow = gy + (static_cast<long>(b) * d.cout + co) * d.lout;
      for (int ci = 0; ci < d.cin; ++ci) {
        double* gxrow = gx + (static_cast<long>(b) * d.cin + ci) * d.lin;
        const double* wrow = w + (static_cast<long>(co) * d.cin + ci) * d.k;
        for (int j = 0; j < d.k; ++j) {
          const double wv = wrow[j];
          for (int t = 0; t < d.lout; ++t) gxrow[t * d.stride + j] += wv * gyrow[t];
        }
      }
    }
  }
}

void conv_grad_weights_scalar(const double* x, const double* gy, double* gw, double* gb,
                              const ConvDims& d) {
  for (int b = 0; b < d.batch; ++b) {
    for (int co = 0; co < d.cout; ++co) {
      const double* gyrow = gy + (static_cast<long>(b) * d.cout + co) * d.lout;
      if (gb) {
        double s = 0.0;
        for (int t = 0; t < d.lout; ++t) s += gyrow[t];
        gb[co] += s;
      }
      for (int ci = 0; ci < d.cin; ++ci) {
        const double* xrow = x + (static_cast<long>(b) * d.cin + ci) * d.lin;
        double* gwrow = gw + (static_cast<long>(co) * d.cin + ci) * d.k;
        for (int j = 0; j < d.k; ++j) {
          double s = 0.0;
          for (int t = 0; t < d.lout; ++t) s += gyrow[t] * xrow[t * d.stride + j];
          gwrow[j] += s;
        }
      }
    }
  }
}

}  // namespace

const Kernels& scalar_kernels() {
  static const Kernels k{"scalar", conv_fwd_scalar, conv_grad_input_scalar,
                         conv_grad_weights_scalar};
  return k;
}

}  // namespace ppg2abp::kernels
