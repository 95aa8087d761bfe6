#include "ppg2abp/bp_extract.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "ppg2abp/errors.hpp"

namespace ppg2abp::bp {

namespace {

constexpr double kFlatRange = 1e-12;

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double median_of(std::vector<double>& scratch) {
  const std::size_t mid = scratch.size() / 2;
  std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(mid),
                   scratch.end());
  const double hi = scratch[mid];
  if (scratch.size() % 2 == 1) return hi;
  const double lo =
      *std::max_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

}  // namespace

std::vector<std::size_t> detect_beats(const std::vector<double>& abp, double fs,
                                      const DetectConfig& config) {
  if (fs <= 0) throw ArgumentError("sample rate must be positive");
  if (config.median_window_s <= 0 || config.min_gap_s <= 0)
    throw ArgumentError("detection windows must be positive");
  if (config.range_fraction < 0 || config.range_fraction > 1)
    throw ArgumentError("range_fraction must lie in [0, 1]");
  const std::size_t n = abp.size();
  if (n < 3) return {};

  const std::size_t half =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(config.median_window_s * fs / 2.0)));
  const std::size_t gap =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(config.min_gap_s * fs)));

  std::vector<std::size_t> peaks;
  std::vector<double> scratch;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!(abp[i] > abp[i - 1] && abp[i] >= abp[i + 1])) continue;
    const std::size_t lo = i > half ? i - half : 0;
    const std::size_t hi = std::min(n, i + half + 1);
    scratch.assign(abp.begin() + static_cast<std::ptrdiff_t>(lo),
                   abp.begin() + static_cast<std::ptrdiff_t>(hi));
    const auto [min_it, max_it] = std::minmax_element(scratch.begin(), scratch.end());
    const double win_min = *min_it, win_max = *max_it;
    if (win_max - win_min <= kFlatRange) continue;
    const double med = median_of(scratch);
    const double threshold = med + config.range_fraction * (win_max - med);
    if (abp[i] < threshold) continue;
    if (!peaks.empty() && i - peaks.back() < gap) {
      if (abp[i] > abp[peaks.back()]) peaks.back() = i;  // higher peak wins
      continue;
    }
    peaks.push_back(i);
  }
  return peaks;
}

BeatSeries extract_sbp_dbp(const std::vector<double>& abp,
                           const std::vector<std::size_t>& beat_indices) {
  const std::size_t n = abp.size();
  for (std::size_t i = 0; i < beat_indices.size(); ++i) {
    if (beat_indices[i] >= n) throw ArgumentError("beat index beyond signal end");
    if (i > 0 && beat_indices[i] <= beat_indices[i - 1])
      throw ArgumentError("beat indices must be strictly increasing");
  }

  BeatSeries series;
  for (std::size_t i = 0; i < beat_indices.size(); ++i) {
    const std::size_t peak = beat_indices[i];
    const std::size_t stop = i + 1 < beat_indices.size() ? beat_indices[i + 1] : n;
    if (peak + 1 >= stop) {
      if (i + 1 == beat_indices.size()) break;  // no observable diastole
      throw ArgumentError("beat indices leave an empty inter-beat interval");
    }
    double trough = std::numeric_limits<double>::infinity();
    for (std::size_t t = peak + 1; t < stop; ++t) trough = std::min(trough, abp[t]);
    if (!(abp[peak] > trough))
      throw ValidationError("systolic value not above diastolic at beat " +
                            std::to_string(i));
    series.beat_indices.push_back(peak);
    series.sbp.push_back(abp[peak]);
    series.dbp.push_back(trough);
  }
  return series;
}

Alignment align_beats(const BeatSeries& truth, const BeatSeries& pred, double fs,
                      double tolerance_s) {
  if (fs <= 0) throw ArgumentError("sample rate must be positive");
  if (tolerance_s <= 0) throw ArgumentError("alignment tolerance must be positive");
  const double tol = tolerance_s * fs;

  // Index of the nearest peak in `other` for each peak in `own`; both sides
  // are sorted, so one sweep suffices. Ties go to the earlier peak.
  const auto nearest = [](const std::vector<std::size_t>& own,
                          const std::vector<std::size_t>& other) {
    std::vector<std::size_t> nn(own.size());
    std::size_t j = 0;
    for (std::size_t i = 0; i < own.size(); ++i) {
      while (j + 1 < other.size() &&
             std::llabs(static_cast<long long>(other[j + 1]) - static_cast<long long>(own[i])) <
                 std::llabs(static_cast<long long>(other[j]) - static_cast<long long>(own[i])))
        ++j;
      nn[i] = j;
    }
    return nn;
  };

  Alignment out;
  if (truth.size() == 0 || pred.size() == 0) {
    out.dropped_truth = truth.size();
    out.dropped_pred = pred.size();
    return out;
  }
  const std::vector<std::size_t> t2p = nearest(truth.beat_indices, pred.beat_indices);
  const std::vector<std::size_t> p2t = nearest(pred.beat_indices, truth.beat_indices);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const std::size_t j = t2p[i];
    const double dist = std::abs(static_cast<double>(pred.beat_indices[j]) -
                                 static_cast<double>(truth.beat_indices[i]));
    if (p2t[j] == i && dist <= tol) {
      out.truth_beats.push_back(i);
      out.pred_beats.push_back(j);
    }
  }
  out.dropped_truth = truth.size() - out.matched();
  out.dropped_pred = pred.size() - out.matched();
  return out;
}

void save_beat_series(const std::string& path, const BeatSeries& series) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ArgumentError("cannot open beat series file for writing: " + path);
  out << "beat_index,sbp,dbp\n";
  for (std::size_t i = 0; i < series.size(); ++i)
    out << series.beat_indices[i] << ',' << format_value(series.sbp[i]) << ','
        << format_value(series.dbp[i]) << '\n';
  if (!out.flush()) throw ArgumentError("failed writing beat series: " + path);
}

BeatSeries load_beat_series(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open beat series file: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "beat_index,sbp,dbp")
    throw ParseError("beat series file missing its header row: " + path);
  BeatSeries series;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string idx_s, sbp_s, dbp_s;
    if (!std::getline(row, idx_s, ',') || !std::getline(row, sbp_s, ',') ||
        !std::getline(row, dbp_s))
      throw ParseError("beat series line " + std::to_string(line_no) +
                       " does not have 3 fields: " + path);
    try {
      std::size_t pos = 0;
      const unsigned long long idx = std::stoull(idx_s, &pos);
      if (pos != idx_s.size()) throw std::invalid_argument(idx_s);
      series.beat_indices.push_back(static_cast<std::size_t>(idx));
      series.sbp.push_back(std::stod(sbp_s));
      series.dbp.push_back(std::stod(dbp_s));
    } catch (const std::exception&) {
      throw ParseError("beat series line " + std::to_string(line_no) +
                       " is not numeric: " + path);
    }
    if (!(series.sbp.back() > series.dbp.back()))
      throw ValidationError("beat series line " + std::to_string(line_no) +
                            " breaks sbp > dbp: " + path);
  }
  return series;
}

}  // namespace ppg2abp::bp
