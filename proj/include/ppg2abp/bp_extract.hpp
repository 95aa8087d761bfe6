#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace ppg2abp::bp {

/// Adaptive peak-detection knobs. The threshold at a sample is the rolling
/// median plus range_fraction of the rolling (max - median) excursion, so it
/// tracks baseline drift and scales with local pulse pressure.
struct DetectConfig {
  double median_window_s = 2.0;
  double range_fraction = 0.5;
  double min_gap_s = 0.33;  // >= 41 samples at 125 Hz, caps rate at ~180 bpm
};

/// Indices of systolic peaks: local maxima at or above the adaptive
/// threshold, thinned so adjacent peaks are at least min_gap_s apart (the
/// higher peak wins a conflict). Flat or beat-free input yields an empty
/// result; that is not an error.
std::vector<std::size_t> detect_beats(const std::vector<double>& abp, double fs,
                                      const DetectConfig& config = {});

/// Per-beat systolic/diastolic pairs. sbp[i] is the waveform value at
/// beat_indices[i]; dbp[i] is the minimum of the following inter-beat
/// interval (the final beat uses the remaining samples).
struct BeatSeries {
  std::vector<std::size_t> beat_indices;
  std::vector<double> sbp, dbp;

  std::size_t size() const { return beat_indices.size(); }
};

/// Builds the series from detected peaks. A final beat with no samples after
/// its peak has no observable diastole and is dropped. Throws
/// ValidationError if any beat's trough fails to sit below its peak.
BeatSeries extract_sbp_dbp(const std::vector<double>& abp,
                           const std::vector<std::size_t>& beat_indices);

/// Pairs of positions (truth_beats[i], pred_beats[i]) into the two series
/// that matched; the rest are dropped and counted.
struct Alignment {
  std::vector<std::size_t> truth_beats, pred_beats;
  std::size_t dropped_truth = 0, dropped_pred = 0;

  std::size_t matched() const { return truth_beats.size(); }
};

/// Mutual-nearest-peak matching within tolerance_s. A beat pairs with the
/// other series' closest peak only when the choice is mutual, which keeps
/// the matching unambiguous; equidistant candidates resolve to the earlier
/// peak.
Alignment align_beats(const BeatSeries& truth, const BeatSeries& pred, double fs,
                      double tolerance_s = 0.25);

/// CSV with header `beat_index,sbp,dbp`.
void save_beat_series(const std::string& path, const BeatSeries& series);
BeatSeries load_beat_series(const std::string& path);

}  // namespace ppg2abp::bp
