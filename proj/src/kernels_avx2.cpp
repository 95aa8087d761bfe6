#include "ppg2abp/kernels.hpp"

#if defined(PPG2ABP_HAVE_AVX2_BUILD) && defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define PPG2ABP_AVX2_ENABLED 1
#endif

namespace ppg2abp::kernels {

#ifdef PPG2ABP_AVX2_ENABLED

namespace {

// Stride-1 paths carry nearly all of the training cost (the residual stack);
// strided layers fall back to the scalar reference.

void conv_fwd_avx2(const double* x, const double* w, const double* bias, double* y,
                   const ConvDims& d) {
  if (d.stride != 1) {
    scalar_kernels().conv_fwd(x, w, bias, y, d);
    return;
  }
  const int ck = d.cin * d.k;
  for (int b = 0; b < d.batch; ++b) {
    const double* xbase = x + static_cast<long>(b) * d.cin * d.lin;
    for (int co = 0; co < d.cout; ++co) {
      double* yrow = y + (static_cast<long>(b) * d.cout + co) * d.lout;
      const double* wrow = w + static_cast<long>(co) * ck;
      const double bias_v = bias ? bias[co] : 0.0;
      int t = 0;
      for (; t + 8 <= d.lout; t += 8) {
        __m256d acc0 = _mm256_set1_pd(bias_v);
        __m256d acc1 = acc0;
        for (int ci = 0; ci < d.cin; ++ci) {
          const double* xrow = xbase + static_cast<long>(ci) * d.lin + t;
          const double* wk = wrow + ci * d.k;
          for (int j = 0; j < d.k; ++j) {
            const __m256d wv = _mm256_set1_pd(wk[j]);
            acc0 = _mm256_fmadd_pd(wv, _mm256_loadu_pd(xrow + j), acc0);
            acc1 = _mm256_fmadd_pd(wv, _mm256_loadu_pd(xrow + j + 4), acc1);
          }
        }
        _mm256_storeu_pd(yrow + t, acc0);
        _mm256_storeu_pd(yrow + t + 4, acc1);
      }
      for (; t < d.lout; ++t) {
        double s = bias_v;
        for (int ci = 0; ci < d.cin; ++ci) {
          const double* xrow = xbase + static_cast<long>(ci) * d.lin;
          const double* wk = wrow + ci * d.k;
          for (int j = 0; j < d.k; ++j) s += wk[j] * xrow[t + j];
        }
        yrow[t] = s;
      }
    }
  }
}

void conv_grad_input_avx2(const double* gy, const double* w, double* gx, const ConvDims& d) {
  if (d.stride != 1) {
    scalar_kernels().conv_grad_input(gy, w, gx, d);
    return;
  }
  for (int b = 0; b < d.batch; ++b) {
    for (int co = 0; co < d.cout; ++co) {
      const double* gyrow = gy + (static_cast<long>(b) * d.cout + co) * d.lout;
      for (int ci = 0; ci < d.cin; ++ci) {
        double* gxrow = gx + (static_cast<long>(b) * d.cin + ci) * d.lin;
        const double* wrow = w + (static_cast<long>(co) * d.cin + ci) * d.k;
        for (int j = 0; j < d.k; ++j) {
          const __m256d wv = _mm256_set1_pd(wrow[j]);
          int t = 0;
          for (; t + 4 <= d.lout; t += 4) {
            __m256d g = _mm256_loadu_pd(gxrow + t + j);
            g = _mm256_fmadd_pd(wv, _mm256_loadu_pd(gyrow + t), g);
            _mm256_storeu_pd(gxrow + t + j, g);
          }
          for (; t < d.lout; ++t) gxrow[t + j] += wrow[j] * gyrow[t];
        }
      }
    }
  }
}

double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

void conv_grad_weights_avx2(const double* x, const double* gy, double* gw, double* gb,
                            const ConvDims& d) {
  if (d.stride != 1) {
    scalar_kernels().conv_grad_weights(x, gy, gw, gb, d);
    return;
  }
  for (int b = 0; b < d.batch; ++b) {
    for (int co = 0; co < d.cout; ++co) {
      const double* gyrow = gy + (static_cast<long>(b) * d.cout + co) * d.lout;
      if (gb) {
        __m256d acc = _mm256_setzero_pd();
        int t = 0;
        for (; t + 4 <= d.lout; t += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(gyrow + t));
        double s = hsum(acc);
        for (; t < d.lout; ++t) s += gyrow[t];
        gb[co] += s;
      }
      for (int ci = 0; ci < d.cin; ++ci) {
        const double* xrow = x + (static_cast<long>(b) * d.cin + ci) * d.lin;
        double* gwrow = gw + (static_cast<long>(co) * d.cin + ci) * d.k;
        for (int j = 0; j < d.k; ++j) {
          __m256d acc0 = _mm256_setzero_pd();
          __m256d acc1 = _mm256_setzero_pd();
          int t = 0;
          for (; t + 8 <= d.lout; t += 8) {
            acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(gyrow + t), _mm256_loadu_pd(xrow + t + j), acc0);
            acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(gyrow + t + 4), _mm256_loadu_pd(xrow + t + j + 4),
                                   acc1);
          }
          double s = hsum(_mm256_add_pd(acc0, acc1));
          for (; t < d.lout; ++t) s += gyrow[t] * xrow[t + j];
          gwrow[j] += s;
        }
      }
    }
  }
}

}  // namespace

const Kernels* avx2_kernels() {
  if (!__builtin_cpu_supports("avx2") || !__builtin_cpu_supports("fma")) return nullptr;
  static const Kernels k{"avx2", conv_fwd_avx2, conv_grad_input_avx2, conv_grad_weights_avx2};
  return &k;
}

#else

const Kernels* avx2_kernels() { return nullptr; }

#endif

}  // namespace ppg2abp::kernels
