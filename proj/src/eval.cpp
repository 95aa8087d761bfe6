#include "ppg2abp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include <boost/math/distributions/students_t.hpp>

#include "json.hpp"

#include "ppg2abp/dsp.hpp"
#include "ppg2abp/errors.hpp"
#include "ppg2abp/rng.hpp"

namespace ppg2abp::eval {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void check_pair(const std::vector<double>& truth, const std::vector<double>& pred) {
  if (truth.size() != pred.size())
    throw ArgumentError("truth and prediction lists differ in length");
  if (truth.empty()) throw ArgumentError("metric input must be non-empty");
}

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

double population_stddev(const std::vector<double>& v, double mean) {
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

nlohmann::ordered_json target_to_json(const TargetReport& t) {
  nlohmann::ordered_json j;
  j["n"] = t.n;
  j["mae"] = t.mae;
  j["rmse"] = t.rmse;
  j["mu"] = t.mu;
  j["sigma"] = t.sigma;
  j["pearson_r"] = t.pearson_r;
  j["p_value"] = t.p_value;
  j["bhs_grade"] = t.bhs_grade;
  j["bhs_le5_pct"] = t.bhs_le5;
  j["bhs_le10_pct"] = t.bhs_le10;
  j["bhs_le15_pct"] = t.bhs_le15;
  j["ba_mean_diff"] = t.ba_mean_diff;
  j["ba_lower_loa"] = t.ba_lower_loa;
  j["ba_upper_loa"] = t.ba_upper_loa;
  return j;
}

nlohmann::ordered_json windows_to_json(const WindowAggregates& w) {
  nlohmann::ordered_json j;
  j["n"] = w.n;
  j["sbp_mae"] = w.n > 0 ? w.sbp_mae : kNan;
  j["dbp_mae"] = w.n > 0 ? w.dbp_mae : kNan;
  return j;
}

nlohmann::ordered_json config_to_json(const ProtocolConfig& cfg) {
  nlohmann::ordered_json j;
  j["protocol"] =
      cfg.kind == ProtocolConfig::Kind::kCrossSubject ? "cross_subject" : "per_subject";
  if (cfg.kind == ProtocolConfig::Kind::kCrossSubject) {
    j["fold_count"] = cfg.fold_count;
    j["max_folds"] = cfg.max_folds;
  } else {
    j["train_fraction"] = cfg.train_fraction;
  }
  j["preproc"] = {{"ppg_low_hz", cfg.preproc.ppg_low_hz},
                  {"ppg_high_hz", cfg.preproc.ppg_high_hz},
                  {"abp_high_hz", cfg.preproc.abp_high_hz}};
  j["train"] = {{"epochs", cfg.train.epochs},
                {"batch_size", cfg.train.batch_size},
                {"lr", cfg.train.lr},
                {"beta1", cfg.train.beta1},
                {"seed", cfg.train.seed},
                {"buffer_size", cfg.train.buffer_size},
                {"gan_form", gan::to_string(cfg.train.gan_form)}};
  j["generator"] = {{"base_width", cfg.gen.base_width}, {"res_blocks", cfg.gen.res_blocks}};
  j["discriminator"] = {{"base_width", cfg.disc.base_width}};
  j["lambda_cyc"] = cfg.lambda_cyc;
  j["detect"] = {{"median_window_s", cfg.detect.median_window_s},
                 {"range_fraction", cfg.detect.range_fraction},
                 {"min_gap_s", cfg.detect.min_gap_s}};
  j["align_tolerance_s"] = cfg.align_tolerance_s;
  return j;
}

void finalize_windows(WindowAggregates& w) {
  w.n = static_cast<long>(w.truth_max.size());
  if (w.n > 0) {
    w.sbp_mae = mae(w.truth_max, w.pred_max);
    w.dbp_mae = mae(w.truth_min, w.pred_min);
  }
}

struct FoldSpec {
  std::string name;
  std::vector<io::SignalRecord> train_records, test_records;
  std::vector<std::string> train_ids, test_ids;
  std::uint64_t seed = 0;
  bool check_disjoint = true;
};

FoldReport evaluate_fold(const FoldSpec& spec, const ProtocolConfig& cfg) {
  FoldReport fold;
  fold.name = spec.name;
  fold.train_subjects = spec.train_ids;
  fold.test_subjects = spec.test_ids;
  try {
    const std::set<std::string> test_set(spec.test_ids.begin(), spec.test_ids.end());
    if (spec.check_disjoint)
      for (const std::string& id : spec.train_ids)
        if (test_set.count(id) > 0)
          throw ValidationError("subject '" + id + "' appears in both train and test");

    gan::WindowPool pool_x, pool_y;
    for (const io::SignalRecord& rec : spec.train_records) {
      const gan::PreparedRecord prep = gan::prepare_record(rec, cfg.preproc);
      pool_x.add(prep.ppg_windows);
      pool_y.add(prep.abp_windows);
    }
    if (spec.check_disjoint) {
      for (const std::string& src : pool_x.sources)
        if (test_set.count(src) > 0)
          throw ValidationError("training window from held-out subject '" + src + "'");
      for (const std::string& src : pool_y.sources)
        if (test_set.count(src) > 0)
          throw ValidationError("training window from held-out subject '" + src + "'");
    }

    gan::PatModel model = gan::PatModel::create(cfg.gen, cfg.disc, cfg.lambda_cyc,
                                                cfg.train.buffer_size, spec.seed);
    gan::TrainConfig tc = cfg.train;
    tc.seed = spec.seed;
    gan::Trainer trainer(model, tc);
    trainer.train(pool_x, pool_y);

    for (const io::SignalRecord& rec : spec.test_records) {
      const gan::PreparedRecord prep = gan::prepare_record(rec, cfg.preproc);
      const io::SignalRecord predicted = gan::translate(model, rec, prep.abp_norm, cfg.preproc);
      const std::vector<double> reference(
          prep.abp_filtered.begin(),
          prep.abp_filtered.begin() + static_cast<std::ptrdiff_t>(predicted.abp.size()));
      const double fs = rec.sample_rate_hz;
      const bp::BeatSeries truth =
          bp::extract_sbp_dbp(reference, bp::detect_beats(reference, fs, cfg.detect));
      const bp::BeatSeries pred =
          bp::extract_sbp_dbp(predicted.abp, bp::detect_beats(predicted.abp, fs, cfg.detect));
      const bp::Alignment align = bp::align_beats(truth, pred, fs, cfg.align_tolerance_s);
      for (std::size_t m = 0; m < align.matched(); ++m) {
        const std::size_t ti = align.truth_beats[m], pi = align.pred_beats[m];
        fold.beats.truth_sbp.push_back(truth.sbp[ti]);
        fold.beats.pred_sbp.push_back(pred.sbp[pi]);
        fold.beats.truth_dbp.push_back(truth.dbp[ti]);
        fold.beats.pred_dbp.push_back(pred.dbp[pi]);
      }
      fold.dropped_truth += static_cast<long>(align.dropped_truth);
      fold.dropped_pred += static_cast<long>(align.dropped_pred);

      const std::size_t pane = static_cast<std::size_t>(io::kWindowLength);
      for (std::size_t o = 0; o + pane <= predicted.abp.size(); o += pane) {
        const auto [tmin, tmax] = std::minmax_element(
            reference.begin() + static_cast<std::ptrdiff_t>(o),
            reference.begin() + static_cast<std::ptrdiff_t>(o + pane));
        const auto [pmin, pmax] = std::minmax_element(
            predicted.abp.begin() + static_cast<std::ptrdiff_t>(o),
            predicted.abp.begin() + static_cast<std::ptrdiff_t>(o + pane));
        fold.windows.truth_max.push_back(*tmax);
        fold.windows.pred_max.push_back(*pmax);
        fold.windows.truth_min.push_back(*tmin);
        fold.windows.pred_min.push_back(*pmin);
      }
    }

    fold.matched = static_cast<long>(fold.beats.size());
    finalize_windows(fold.windows);
    if (fold.matched == 0) {
      fold.failure = "no matched beats";
      return fold;
    }
    fold.sbp = make_target_report(fold.beats.truth_sbp, fold.beats.pred_sbp);
    fold.dbp = make_target_report(fold.beats.truth_dbp, fold.beats.pred_dbp);
    fold.ok = true;
  } catch (const Error& e) {
    fold.ok = false;
    fold.failure = e.what();
  }
  return fold;
}

void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::vector<double>>& columns) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ArgumentError("cannot open CSV for writing: " + path);
  out << header << '\n';
  const std::size_t rows = columns.empty() ? 0 : columns.front().size();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c)
      out << (c > 0 ? "," : "") << format_value(columns[c][r]);
    out << '\n';
  }
  if (!out.flush()) throw ArgumentError("failed writing CSV: " + path);
}

void write_error_histogram(const std::string& path, const std::vector<double>& truth,
                           const std::vector<double>& pred) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ArgumentError("cannot open CSV for writing: " + path);
  out << "bin_lo,bin_hi,count\n";
  if (!truth.empty()) {
    std::vector<double> errors(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) errors[i] = pred[i] - truth[i];
    const double lo = std::floor(*std::min_element(errors.begin(), errors.end()));
    const double hi = std::ceil(*std::max_element(errors.begin(), errors.end()));
    const long bins = std::max(1L, static_cast<long>(hi - lo));
    for (long b = 0; b < bins; ++b) {
      const double blo = lo + static_cast<double>(b);
      const double bhi = blo + 1.0;
      long count = 0;
      for (double e : errors)
        if (e >= blo && (e < bhi || (b + 1 == bins && e <= bhi))) ++count;
      out << format_value(blo) << ',' << format_value(bhi) << ',' << count << '\n';
    }
  }
  if (!out.flush()) throw ArgumentError("failed writing CSV: " + path);
}

}  // namespace

double mae(const std::vector<double>& truth, const std::vector<double>& pred) {
  check_pair(truth, pred);
  double acc = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) acc += std::abs(truth[i] - pred[i]);
  return acc / static_cast<double>(truth.size());
}

double rmse(const std::vector<double>& truth, const std::vector<double>& pred) {
  check_pair(truth, pred);
  double acc = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = truth[i] - pred[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(truth.size()));
}

PearsonResult pearson(const std::vector<double>& truth, const std::vector<double>& pred) {
  check_pair(truth, pred);
  const std::size_t n = truth.size();
  if (n < 3) throw ArgumentError("pearson needs at least 3 samples");
  const double mt = mean_of(truth), mp = mean_of(pred);
  double stt = 0.0, spp = 0.0, stp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dt = truth[i] - mt, dp = pred[i] - mp;
    stt += dt * dt;
    spp += dp * dp;
    stp += dt * dp;
  }
  if (stt == 0.0 || spp == 0.0)
    throw DegenerateRangeError("correlation undefined for constant input");
  PearsonResult res;
  res.r = stp / std::sqrt(stt * spp);
  const double dof = static_cast<double>(n - 2);
  const double denom = 1.0 - res.r * res.r;
  if (denom <= 0.0) {
    res.p_value = 0.0;
    return res;
  }
  const double t = res.r * std::sqrt(dof / denom);
  const boost::math::students_t dist(dof);
  res.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return res;
}

BhsResult bhs_grade(const std::vector<double>& abs_errors) {
  if (abs_errors.empty()) throw ArgumentError("bhs_grade needs at least one error");
  long le5 = 0, le10 = 0, le15 = 0;
  for (double e : abs_errors) {
    if (e < 0) throw ArgumentError("bhs_grade takes absolute errors");
    if (e <= 5.0) ++le5;
    if (e <= 10.0) ++le10;
    if (e <= 15.0) ++le15;
  }
  const long n = static_cast<long>(abs_errors.size());
  BhsResult res;
  res.le5_pct = 100.0 * static_cast<double>(le5) / static_cast<double>(n);
  res.le10_pct = 100.0 * static_cast<double>(le10) / static_cast<double>(n);
  res.le15_pct = 100.0 * static_cast<double>(le15) / static_cast<double>(n);
  // Exact integer comparison against the percent cutoffs: count*100 >= cutoff*n.
  const auto meets = [n, le5, le10, le15](long c5, long c10, long c15) {
    return le5 * 100 >= c5 * n && le10 * 100 >= c10 * n && le15 * 100 >= c15 * n;
  };
  if (meets(60, 85, 95))
    res.grade = "A";
  else if (meets(50, 75, 90))
    res.grade = "B";
  else if (meets(40, 65, 85))
    res.grade = "C";
  else
    res.grade = "fail";
  return res;
}

BlandAltman bland_altman(const std::vector<double>& truth, const std::vector<double>& pred) {
  check_pair(truth, pred);
  if (truth.size() < 2) throw ArgumentError("bland_altman needs at least 2 samples");
  BlandAltman res;
  res.means.resize(truth.size());
  res.diffs.resize(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    res.means[i] = 0.5 * (truth[i] + pred[i]);
    res.diffs[i] = pred[i] - truth[i];
  }
  res.mean_diff = mean_of(res.diffs);
  const double sigma = population_stddev(res.diffs, res.mean_diff);
  res.lower_loa = res.mean_diff - 1.96 * sigma;
  res.upper_loa = res.mean_diff + 1.96 * sigma;
  return res;
}

TargetReport make_target_report(const std::vector<double>& truth,
                                const std::vector<double>& pred) {
  check_pair(truth, pred);
  TargetReport r;
  r.n = static_cast<long>(truth.size());
  r.mae = mae(truth, pred);
  r.rmse = rmse(truth, pred);
  std::vector<double> signed_errors(truth.size()), abs_errors(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    signed_errors[i] = pred[i] - truth[i];
    abs_errors[i] = std::abs(signed_errors[i]);
  }
  r.mu = mean_of(signed_errors);
  r.sigma = population_stddev(signed_errors, r.mu);
  try {
    const PearsonResult pr = pearson(truth, pred);
    r.pearson_r = pr.r;
    r.p_value = pr.p_value;
  } catch (const Error&) {
    r.pearson_r = kNan;
    r.p_value = kNan;
  }
  const BhsResult bhs = bhs_grade(abs_errors);
  r.bhs_grade = bhs.grade;
  r.bhs_le5 = bhs.le5_pct;
  r.bhs_le10 = bhs.le10_pct;
  r.bhs_le15 = bhs.le15_pct;
  if (truth.size() >= 2) {
    const BlandAltman ba = bland_altman(truth, pred);
    r.ba_mean_diff = ba.mean_diff;
    r.ba_lower_loa = ba.lower_loa;
    r.ba_upper_loa = ba.upper_loa;
  } else {
    r.ba_mean_diff = r.mu;
    r.ba_lower_loa = kNan;
    r.ba_upper_loa = kNan;
  }
  return r;
}

void MatchedBeats::append(const MatchedBeats& other) {
  truth_sbp.insert(truth_sbp.end(), other.truth_sbp.begin(), other.truth_sbp.end());
  pred_sbp.insert(pred_sbp.end(), other.pred_sbp.begin(), other.pred_sbp.end());
  truth_dbp.insert(truth_dbp.end(), other.truth_dbp.begin(), other.truth_dbp.end());
  pred_dbp.insert(pred_dbp.end(), other.pred_dbp.begin(), other.pred_dbp.end());
}

void WindowAggregates::append(const WindowAggregates& other) {
  truth_max.insert(truth_max.end(), other.truth_max.begin(), other.truth_max.end());
  pred_max.insert(pred_max.end(), other.pred_max.begin(), other.pred_max.end());
  truth_min.insert(truth_min.end(), other.truth_min.begin(), other.truth_min.end());
  pred_min.insert(pred_min.end(), other.pred_min.begin(), other.pred_min.end());
}

std::string config_hash(const ProtocolConfig& cfg) {
  const std::string canon = config_to_json(cfg).dump();
  const std::uint64_t h = rng::derive(0, canon);
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

EvalReport run_protocol(const std::vector<io::SignalRecord>& dataset,
                        const ProtocolConfig& cfg) {
  if (dataset.empty()) throw ArgumentError("evaluation needs at least one record");
  cfg.train.validate();

  EvalReport report;
  report.seed = cfg.train.seed;
  report.config_hash = config_hash(cfg);

  std::vector<FoldSpec> specs;
  if (cfg.kind == ProtocolConfig::Kind::kCrossSubject) {
    report.protocol = "cross_subject";
    std::vector<std::string> ids;
    ids.reserve(dataset.size());
    for (const io::SignalRecord& rec : dataset) ids.push_back(rec.subject_id);
    report.plan = io::make_folds(ids, cfg.fold_count, cfg.train.seed);
    const int run_folds = cfg.max_folds > 0 ? std::min(cfg.max_folds, cfg.fold_count)
                                            : cfg.fold_count;
    for (int f = 0; f < run_folds; ++f) {
      FoldSpec spec;
      spec.name = "fold" + std::to_string(f);
      spec.test_ids = report.plan.subjects_in(f);
      spec.train_ids = report.plan.subjects_not_in(f);
      spec.seed = rng::derive(cfg.train.seed, "fold." + std::to_string(f));
      const std::set<std::string> test_set(spec.test_ids.begin(), spec.test_ids.end());
      for (const io::SignalRecord& rec : dataset)
        (test_set.count(rec.subject_id) > 0 ? spec.test_records : spec.train_records)
            .push_back(rec);
      specs.push_back(std::move(spec));
    }
  } else {
    report.protocol = "per_subject";
    report.train_fraction = cfg.train_fraction;
    for (const io::SignalRecord& rec : dataset) {
      FoldSpec spec;
      spec.name = rec.subject_id;
      spec.train_ids = {rec.subject_id};
      spec.test_ids = {rec.subject_id};
      spec.seed = rng::derive(cfg.train.seed, "subject." + rec.subject_id);
      spec.check_disjoint = false;  // the split is temporal within one subject
      auto [train_rec, test_rec] = io::split_per_subject(rec, cfg.train_fraction);
      spec.train_records.push_back(std::move(train_rec));
      spec.test_records.push_back(std::move(test_rec));
      specs.push_back(std::move(spec));
    }
  }

  for (const FoldSpec& spec : specs) {
    FoldReport fold = evaluate_fold(spec, cfg);
    report.pooled.append(fold.beats);
    report.agg_windows.append(fold.windows);
    report.folds.push_back(std::move(fold));
  }
  finalize_windows(report.agg_windows);
  report.aggregate_ok = report.pooled.size() > 0;
  if (report.aggregate_ok) {
    report.agg_sbp = make_target_report(report.pooled.truth_sbp, report.pooled.pred_sbp);
    report.agg_dbp = make_target_report(report.pooled.truth_dbp, report.pooled.pred_dbp);
  }
  return report;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["protocol"] = report.protocol;
  j["seed"] = report.seed;
  j["config_hash"] = report.config_hash;
  j["stddev_form"] = "population";
  if (report.protocol == "cross_subject") {
    nlohmann::ordered_json plan;
    plan["k"] = report.plan.fold_count;
    nlohmann::ordered_json assignments = nlohmann::ordered_json::object();
    for (const auto& [id, fold] : report.plan.assignments) assignments[id] = fold;
    plan["assignments"] = std::move(assignments);
    j["plan"] = std::move(plan);
  } else {
    j["train_fraction"] = report.train_fraction;
  }
  nlohmann::ordered_json folds = nlohmann::ordered_json::array();
  for (const FoldReport& f : report.folds) {
    nlohmann::ordered_json fj;
    fj["name"] = f.name;
    fj["ok"] = f.ok;
    if (!f.ok) fj["failure"] = f.failure;
    fj["train_subjects"] = f.train_subjects;
    fj["test_subjects"] = f.test_subjects;
    fj["matched_beats"] = f.matched;
    fj["dropped_truth_beats"] = f.dropped_truth;
    fj["dropped_pred_beats"] = f.dropped_pred;
    if (f.ok) {
      fj["sbp"] = target_to_json(f.sbp);
      fj["dbp"] = target_to_json(f.dbp);
    }
    fj["windows"] = windows_to_json(f.windows);
    folds.push_back(std::move(fj));
  }
  j["folds"] = std::move(folds);
  nlohmann::ordered_json agg;
  agg["ok"] = report.aggregate_ok;
  agg["matched_beats"] = static_cast<long>(report.pooled.size());
  if (report.aggregate_ok) {
    agg["sbp"] = target_to_json(report.agg_sbp);
    agg["dbp"] = target_to_json(report.agg_dbp);
  }
  agg["windows"] = windows_to_json(report.agg_windows);
  j["aggregate"] = std::move(agg);
  return j.dump(2) + "\n";
}

void write_report_files(const std::string& dir, const EvalReport& report) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "report.json", std::ios::trunc);
    if (!out) throw ArgumentError("cannot open report.json for writing in " + dir);
    out << report_to_json(report);
    if (!out.flush()) throw ArgumentError("failed writing report.json in " + dir);
  }
  const MatchedBeats& p = report.pooled;
  const auto ba_cols = [](const std::vector<double>& truth, const std::vector<double>& pred) {
    std::vector<double> means(truth.size()), diffs(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
      means[i] = 0.5 * (truth[i] + pred[i]);
      diffs[i] = pred[i] - truth[i];
    }
    return std::vector<std::vector<double>>{means, diffs};
  };
  write_csv((fs::path(dir) / "ba_sbp.csv").string(), "mean,diff",
            ba_cols(p.truth_sbp, p.pred_sbp));
  write_csv((fs::path(dir) / "ba_dbp.csv").string(), "mean,diff",
            ba_cols(p.truth_dbp, p.pred_dbp));
  write_error_histogram((fs::path(dir) / "err_hist_sbp.csv").string(), p.truth_sbp,
                        p.pred_sbp);
  write_error_histogram((fs::path(dir) / "err_hist_dbp.csv").string(), p.truth_dbp,
                        p.pred_dbp);
  const WindowAggregates& w = report.agg_windows;
  write_csv((fs::path(dir) / "window_extrema.csv").string(),
            "truth_max,pred_max,truth_min,pred_min",
            {w.truth_max, w.pred_max, w.truth_min, w.pred_min});
}

}  // namespace ppg2abp::eval
