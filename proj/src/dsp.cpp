#include "ppg2abp/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include <fftw3.h>

#include "ppg2abp/errors.hpp"

namespace ppg2abp::dsp {

namespace {

// FFTW's planner is not thread-safe; execution on private buffers is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwBuffers {
  double* real = nullptr;
  fftw_complex* spec = nullptr;
  fftw_plan fwd{};
  fftw_plan inv{};

  explicit FftwBuffers(std::size_t n) {
    real = fftw_alloc_real(n);
    spec = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard<std::mutex> lock(planner_mutex());
    fwd = fftw_plan_dft_r2c_1d(static_cast<int>(n), real, spec, FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec, real, FFTW_ESTIMATE);
  }

  ~FftwBuffers() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(inv);
    fftw_free(real);
    fftw_free(spec);
  }

  FftwBuffers(const FftwBuffers&) = delete;
  FftwBuffers& operator=(const FftwBuffers&) = delete;
};

}  // namespace

std::vector<double> fft_filter(const std::vector<double>& signal, double fs,
                               std::optional<double> low_cut, std::optional<double> high_cut) {
  const std::size_t n = signal.size();
  if (n < 2) throw ArgumentError("fft_filter needs at least 2 samples");
  if (fs <= 0.0) throw ArgumentError("fft_filter: sample rate must be positive");
  if (!low_cut && !high_cut) throw ArgumentError("fft_filter: no cutoff given");
  const double nyquist = fs / 2.0;
  if (low_cut && *low_cut >= nyquist)
    throw ArgumentError("fft_filter: low cutoff at or above Nyquist");
  if (high_cut && *high_cut >= nyquist)
    throw ArgumentError("fft_filter: high cutoff at or above Nyquist");
  if (low_cut && high_cut && *low_cut > *high_cut)
    throw ArgumentError("fft_filter: low cutoff above high cutoff");

  FftwBuffers buf(n);
  std::copy(signal.begin(), signal.end(), buf.real);
  fftw_execute(buf.fwd);

  const double lo = low_cut.value_or(0.0);
  const double hi = high_cut.value_or(nyquist);
  const std::size_t n_bins = n / 2 + 1;
  for (std::size_t i = 0; i < n_bins; ++i) {
    double f = static_cast<double>(i) * fs / static_cast<double>(n);
    if (f < lo || f > hi) {
      buf.spec[i][0] = 0.0;
      buf.spec[i][1] = 0.0;
    }
  }

  fftw_execute(buf.inv);
  std::vector<double> out(n);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = buf.real[i] * scale;
  return out;
}

std::pair<std::vector<double>, NormParams> normalize(const std::vector<double>& signal) {
  if (signal.empty()) throw ArgumentError("normalize: empty signal");
  auto [mn, mx] = std::minmax_element(signal.begin(), signal.end());
  NormParams params{*mn, *mx};
  if (!params.valid())
    throw DegenerateRangeError("normalize: constant signal (min == max)");
  std::vector<double> out(signal.size());
  const double span = params.max_val - params.min_val;
  for (std::size_t i = 0; i < signal.size(); ++i)
    out[i] = 2.0 * (signal[i] - params.min_val) / span - 1.0;
  return {std::move(out), params};
}

std::vector<double> denormalize(const std::vector<double>& signal, const NormParams& params) {
  if (!params.valid()) throw ArgumentError("denormalize: invalid params (max <= min)");
  std::vector<double> out(signal.size());
  const double span = params.max_val - params.min_val;
  for (std::size_t i = 0; i < signal.size(); ++i)
    out[i] = (signal[i] + 1.0) * 0.5 * span + params.min_val;
  return out;
}

std::size_t window_count(std::size_t n, int window_len, int hop) {
  if (n < static_cast<std::size_t>(window_len)) return 0;
  return (n - window_len) / hop + 1;
}

WindowBatch segment_windows(const std::vector<double>& signal, const NormParams& norm,
                            const std::string& source_id) {
  WindowBatch batch;
  batch.source_id = source_id;
  batch.norm = norm;
  const std::size_t n = signal.size();
  if (n < static_cast<std::size_t>(batch.window_len))
    throw ArgumentError("segment_windows: signal shorter than one window (" +
                        std::to_string(n) + " < " + std::to_string(batch.window_len) + ")");
  for (double v : signal)
    if (v < -1.0 - 1e-9 || v > 1.0 + 1e-9)
      throw ValidationError("segment_windows: sample outside [-1, 1]; normalize first");

  const std::size_t count = window_count(n, batch.window_len, batch.hop);
  batch.windows.resize(count * batch.window_len);
  batch.offsets.resize(count);
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t off = w * batch.hop;
    batch.offsets[w] = off;
    std::copy(signal.begin() + off, signal.begin() + off + batch.window_len,
              batch.windows.begin() + w * batch.window_len);
  }
  return batch;
}

std::vector<double> reconstruct_from_windows(const WindowBatch& batch) {
  const std::size_t count = batch.count();
  if (count == 0) throw ArgumentError("reconstruct_from_windows: empty batch");
  const int W = batch.window_len;
  const int hop = batch.hop;
  for (std::size_t i = 1; i < count; ++i)
    if (batch.offsets[i] - batch.offsets[i - 1] != static_cast<std::size_t>(hop))
      throw ValidationError("reconstruct_from_windows: non-uniform hop at window " +
                            std::to_string(i));
  if (batch.offsets[0] != 0)
    throw ValidationError("reconstruct_from_windows: first offset must be 0");

  const std::size_t out_len = batch.offsets.back() + W;
  std::vector<double> out(out_len, 0.0);

  const int overlap = W - hop;  // 64 samples with the standard geometry
  for (std::size_t w = 0; w < count; ++w) {
    const double* src = batch.row(w);
    const std::size_t off = batch.offsets[w];
    for (int i = 0; i < W; ++i) {
      double weight = 1.0;
      if (w > 0 && i < overlap) {
        // fade-in against the previous window's fade-out; weights sum to 1
        double a = overlap == 1 ? 0.5 : static_cast<double>(i) / (overlap - 1);
        weight = a;
      } else if (w + 1 < count && i >= hop) {
        double a = overlap == 1 ? 0.5 : static_cast<double>(i - hop) / (overlap - 1);
        weight = 1.0 - a;
      }
      out[off + i] += weight * src[i];
    }
  }
  return out;
}

}  // namespace ppg2abp::dsp
