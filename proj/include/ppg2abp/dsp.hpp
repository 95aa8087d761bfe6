#pragma once

#include <optional>
#include <string>
#include <vector>

namespace ppg2abp::dsp {

/// Min/max of the original signal; enough to invert normalization exactly.
struct NormParams {
  double min_val = 0.0;
  double max_val = 1.0;

  bool valid() const { return max_val > min_val; }
};

/// Fixed-length overlapping segments of one normalized signal, with enough
/// provenance to reconstruct and to keep subjects disjoint across splits.
struct WindowBatch {
  int window_len = 256;
  int hop = 192;
  std::vector<double> windows;      // row-major [n_windows x window_len]
  std::vector<std::size_t> offsets; // start index of each window in the source
  std::string source_id;
  NormParams norm;

  std::size_t count() const { return offsets.size(); }
  const double* row(std::size_t i) const { return windows.data() + i * window_len; }
};

/// Brick-wall frequency-domain filter: bins with frequency strictly outside
/// [low_cut, high_cut] are zeroed, passband bins pass unchanged, output is
/// real and the same length as the input. Pass nullopt to leave a side open
/// (low-pass / high-pass); at least one cutoff is required and cutoffs must
/// be below Nyquist.
std::vector<double> fft_filter(const std::vector<double>& signal, double fs,
                               std::optional<double> low_cut, std::optional<double> high_cut);

/// Affine min-max map onto [-1, 1]. Throws DegenerateRangeError for constant
/// input. The returned parameters invert the map exactly.
std::pair<std::vector<double>, NormParams> normalize(const std::vector<double>& signal);

std::vector<double> denormalize(const std::vector<double>& signal, const NormParams& params);

/// Expected window count for a signal of length n: floor((n - 256)/192) + 1.
std::size_t window_count(std::size_t n, int window_len = 256, int hop = 192);

/// Splits a normalized signal into 256-sample windows with 25% overlap
/// (hop 192). Trailing samples that do not fill a window are dropped.
WindowBatch segment_windows(const std::vector<double>& signal, const NormParams& norm,
                            const std::string& source_id);

/// Stitches overlapping windows back into one signal. The 64 overlapped
/// samples of adjacent windows are linearly cross-faded (weights sum to 1),
/// so an unmodified segmentation reconstructs the original samples.
/// Output length is last offset + window length.
std::vector<double> reconstruct_from_windows(const WindowBatch& batch);

}  // namespace ppg2abp::dsp
