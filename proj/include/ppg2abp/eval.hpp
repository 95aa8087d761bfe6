#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ppg2abp/bp_extract.hpp"
#include "ppg2abp/cyclegan.hpp"
#include "ppg2abp/nets.hpp"
#include "ppg2abp/signal_io.hpp"

namespace ppg2abp::eval {

// Scalar agreement metrics between matched truth/prediction value lists.

double mae(const std::vector<double>& truth, const std::vector<double>& pred);
double rmse(const std::vector<double>& truth, const std::vector<double>& pred);

struct PearsonResult {
  double r = 0.0;
  double p_value = 1.0;  // two-sided, t-distribution with n-2 dof
};

/// Needs n >= 3 and nonzero variance on both sides; perfectly collinear
/// input pins p_value to 0.
PearsonResult pearson(const std::vector<double>& truth, const std::vector<double>& pred);

/// Grade table (percent of absolute errors within 5 / 10 / 15 mmHg):
/// A needs 60/85/95, B needs 50/75/90, C needs 40/65/85; otherwise "fail".
/// Threshold comparisons are inclusive on both sides (an error of exactly
/// 5 mmHg counts as within 5; a fraction exactly at a cutoff meets it).
struct BhsResult {
  std::string grade;  // "A", "B", "C", or "fail"
  double le5_pct = 0.0, le10_pct = 0.0, le15_pct = 0.0;
};

BhsResult bhs_grade(const std::vector<double>& abs_errors);

/// Pointwise means and differences plus 95% limits of agreement,
/// mean_diff +/- 1.96 sigma with the population (1/n) standard deviation.
struct BlandAltman {
  std::vector<double> means, diffs;
  double mean_diff = 0.0, lower_loa = 0.0, upper_loa = 0.0;
};

BlandAltman bland_altman(const std::vector<double>& truth, const std::vector<double>& pred);

/// All per-target numbers of one report row. pearson_r/p_value are NaN
/// (serialized as null) when n < 3 or variance vanishes; the Bland-Altman
/// limits need n >= 2.
struct TargetReport {
  long n = 0;
  double mae = 0, rmse = 0, mu = 0, sigma = 0;
  double pearson_r = 0, p_value = 0;
  std::string bhs_grade;
  double bhs_le5 = 0, bhs_le10 = 0, bhs_le15 = 0;
  double ba_mean_diff = 0, ba_lower_loa = 0, ba_upper_loa = 0;
};

TargetReport make_target_report(const std::vector<double>& truth,
                                const std::vector<double>& pred);

/// Matched per-beat values pooled over a fold (or over all folds).
struct MatchedBeats {
  std::vector<double> truth_sbp, pred_sbp, truth_dbp, pred_dbp;

  void append(const MatchedBeats& other);
  std::size_t size() const { return truth_sbp.size(); }
};

/// Secondary convention: extrema of aligned non-overlapping 256-sample panes
/// (max as the systolic proxy, min as diastolic).
struct WindowAggregates {
  long n = 0;
  double sbp_mae = 0, dbp_mae = 0;
  std::vector<double> truth_max, pred_max, truth_min, pred_min;

  void append(const WindowAggregates& other);
};

struct FoldReport {
  std::string name;
  bool ok = false;
  std::string failure;
  std::vector<std::string> train_subjects, test_subjects;
  long matched = 0, dropped_truth = 0, dropped_pred = 0;
  TargetReport sbp, dbp;
  MatchedBeats beats;
  WindowAggregates windows;
};

struct ProtocolConfig {
  enum class Kind { kCrossSubject, kPerSubject };

  Kind kind = Kind::kCrossSubject;
  int fold_count = 5;          // cross-subject
  double train_fraction = 0.8; // per-subject
  int max_folds = 0;           // cross-subject: run only the first N folds; 0 = all
  gan::PreprocConfig preproc;
  gan::TrainConfig train;      // train.seed doubles as the fold-shuffle seed
  nets::GeneratorConfig gen;
  nets::DiscriminatorConfig disc;
  double lambda_cyc = 10.0;
  bp::DetectConfig detect;
  double align_tolerance_s = 0.25;
};

struct EvalReport {
  std::string protocol;  // "cross_subject" or "per_subject"
  std::uint64_t seed = 0;
  std::string config_hash;
  io::FoldPlan plan;          // cross-subject
  double train_fraction = 0;  // per-subject
  std::vector<FoldReport> folds;
  bool aggregate_ok = false;
  TargetReport agg_sbp, agg_dbp;
  WindowAggregates agg_windows;
  MatchedBeats pooled;
};

/// Runs the full protocol: per fold (or subject), train a fresh model on the
/// training side, translate the held-out pulse signals, extract and align
/// beats, and compute every metric. The aggregate row pools matched beats
/// across folds before recomputing metrics, which weights every beat
/// equally. A fold with zero matched beats is marked failed and the run
/// continues. Subject-disjointness of every training pool is asserted.
EvalReport run_protocol(const std::vector<io::SignalRecord>& dataset,
                        const ProtocolConfig& cfg);

/// Canonical JSON form (stable field order, full float round-trip), also
/// used to derive config_hash.
std::string report_to_json(const EvalReport& report);
std::string config_hash(const ProtocolConfig& cfg);

/// report.json plus plotting CSVs (Bland-Altman points, 1-mmHg error
/// histograms, per-window extrema) under dir.
void write_report_files(const std::string& dir, const EvalReport& report);

}  // namespace ppg2abp::eval
