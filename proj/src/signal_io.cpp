#include "ppg2abp/signal_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ppg2abp/errors.hpp"
#include "ppg2abp/rng.hpp"

#include "json.hpp"

namespace ppg2abp::io {

std::vector<std::string> FoldPlan::subjects_in(int fold) const {
  std::vector<std::string> out;
  for (const auto& [subject, f] : assignments)
    if (f == fold) out.push_back(subject);
  return out;
}

std::vector<std::string> FoldPlan::subjects_not_in(int fold) const {
  std::vector<std::string> out;
  for (const auto& [subject, f] : assignments)
    if (f != fold) out.push_back(subject);
  return out;
}

namespace {

// trims ASCII whitespace from both ends
std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& token, std::size_t line_no, const char* field) {
  const std::string t = trim(token);
  if (t.empty())
    throw ParseError("line " + std::to_string(line_no) + ": empty " + field + " field");
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) + ": " + field + " field '" + t +
                     "' is not a number");
  }
  if (used != t.size())
    throw ParseError("line " + std::to_string(line_no) + ": trailing characters in " + field +
                     " field '" + t + "'");
  return v;
}

}  // namespace

SignalRecord load_record(const std::string& path, bool allow_nonstandard_fs) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open record file: " + path);

  SignalRecord rec;
  rec.sample_rate_hz = 0.0;
  std::string line;
  std::size_t line_no = 0;
  bool saw_data = false;
  bool saw_column_header = false;

  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      std::size_t eq = t.find('=');
      if (eq == std::string::npos)
        throw ParseError("line " + std::to_string(line_no) + ": header line without '='");
      std::string key = trim(t.substr(1, eq - 1));
      std::string value = trim(t.substr(eq + 1));
      if (key == "subject") {
        rec.subject_id = value;
      } else if (key == "fs") {
        rec.sample_rate_hz = parse_number(value, line_no, "fs");
      }
      // unknown header keys are ignored
      continue;
    }
    if (!saw_data && !saw_column_header && t == "ppg,abp") {
      saw_column_header = true;
      continue;
    }
    std::size_t comma = t.find(',');
    if (comma == std::string::npos)
      throw ParseError("line " + std::to_string(line_no) + ": expected 'ppg,abp' row, got '" + t +
                       "'");
    rec.ppg.push_back(parse_number(t.substr(0, comma), line_no, "ppg"));
    rec.abp.push_back(parse_number(t.substr(comma + 1), line_no, "abp"));
    saw_data = true;
  }

  if (!saw_data) throw ParseError(path + ": no sample rows found");
  if (rec.subject_id.empty())
    throw ParseError(path + ": missing '# subject=<id>' header");
  if (rec.sample_rate_hz <= 0.0)
    throw ParseError(path + ": missing or invalid '# fs=<hz>' header");
  if (rec.ppg.size() != rec.abp.size())
    throw ValidationError(path + ": unequal channel lengths");
  if (!allow_nonstandard_fs && rec.sample_rate_hz != kStandardSampleRate)
    throw ValidationError(path + ": sample rate " + std::to_string(rec.sample_rate_hz) +
                          " != 125 (pass allow_nonstandard_fs to accept)");
  return rec;
}

void save_record(const SignalRecord& record, const std::string& path) {
  if (record.ppg.size() != record.abp.size())
    throw ValidationError("record has unequal channel lengths");
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write record file: " + path);
  out << "# subject=" << record.subject_id << "\n";
  char fsbuf[64];
  std::snprintf(fsbuf, sizeof(fsbuf), "%.17g", record.sample_rate_hz);
  out << "# fs=" << fsbuf << "\n";
  out << "ppg,abp\n";
  char buf[80];
  for (std::size_t i = 0; i < record.ppg.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", record.ppg[i], record.abp[i]);
    out << buf;
  }
}

SignalRecord generate_synthetic_pair(std::uint64_t seed, std::size_t n_samples,
                                     const SynthConfig& config) {
  if (n_samples < static_cast<std::size_t>(kWindowLength))
    throw ArgumentError("synthetic record needs at least " + std::to_string(kWindowLength) +
                        " samples, got " + std::to_string(n_samples));
  if (config.abp_max <= config.abp_min)
    throw ArgumentError("synthetic ABP range is empty");

  rng::Stream jitter(rng::derive(seed, "synth.beat_jitter"));

  const double fs = config.sample_rate_hz;
  const double f0 = config.fundamental_hz;
  const std::size_t n_beats = static_cast<std::size_t>(std::ceil(f0 * n_samples / fs)) + 1;
  std::vector<double> beat_amp(n_beats);
  for (auto& a : beat_amp) a = 1.0 + config.beat_jitter * (2.0 * jitter.uniform() - 1.0);

  // bound on |s(t)| used to keep the normalized train inside [-1, 1]
  const double amp_bound = (1.0 + config.beat_jitter) * (1.0 + config.harmonic_gain);
  const double mid = 0.5 * (config.abp_min + config.abp_max);
  const double half = 0.5 * (config.abp_max - config.abp_min);
  const double map_norm = std::tanh(config.map_gain);

  SignalRecord rec;
  rec.subject_id = "synth-" + std::to_string(seed);
  rec.sample_rate_hz = fs;
  rec.ppg.resize(n_samples);
  rec.abp.resize(n_samples);

  const double two_pi = 6.283185307179586476925286766559;
  for (std::size_t i = 0; i < n_samples; ++i) {
    double t = static_cast<double>(i) / fs;
    std::size_t beat = static_cast<std::size_t>(f0 * t);
    double theta = two_pi * f0 * t;
    double s = beat_amp[std::min(beat, n_beats - 1)] *
               (std::sin(theta) + config.harmonic_gain * std::sin(2.0 * theta + config.harmonic_phase));
    rec.ppg[i] = s;
    // monotone smooth map of the shared beat train into the target mmHg range
    double u = s / amp_bound;  // in [-1, 1]
    rec.abp[i] = mid + half * std::tanh(config.map_gain * u) / map_norm;
  }
  return rec;
}

FoldPlan make_folds(const std::vector<std::string>& subject_ids, int k, std::uint64_t seed) {
  if (k < 2) throw ArgumentError("fold count must be >= 2, got " + std::to_string(k));
  if (subject_ids.size() < static_cast<std::size_t>(k))
    throw ArgumentError("cannot make " + std::to_string(k) + " folds from " +
                        std::to_string(subject_ids.size()) + " subjects");
  for (std::size_t i = 0; i < subject_ids.size(); ++i)
    for (std::size_t j = i + 1; j < subject_ids.size(); ++j)
      if (subject_ids[i] == subject_ids[j])
        throw ArgumentError("duplicate subject id: " + subject_ids[i]);

  std::vector<std::string> shuffled = subject_ids;
  rng::Stream stream(rng::derive(seed, "folds"));
  stream.shuffle(shuffled);

  FoldPlan plan;
  plan.fold_count = k;
  for (std::size_t i = 0; i < shuffled.size(); ++i)
    plan.assignments[shuffled[i]] = static_cast<int>(i % k);
  return plan;
}

std::string fold_plan_to_json(const FoldPlan& plan) {
  nlohmann::ordered_json j;
  j["k"] = plan.fold_count;
  nlohmann::ordered_json a = nlohmann::ordered_json::object();
  for (const auto& [subject, fold] : plan.assignments) a[subject] = fold;
  j["assignments"] = a;
  return j.dump(2);
}

FoldPlan fold_plan_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("fold plan JSON: ") + e.what());
  }
  FoldPlan plan;
  try {
    plan.fold_count = j.at("k").get<int>();
    for (const auto& [subject, fold] : j.at("assignments").items())
      plan.assignments[subject] = fold.get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("fold plan JSON: ") + e.what());
  }
  if (plan.fold_count < 1) throw ValidationError("fold plan: k must be positive");
  for (const auto& [subject, fold] : plan.assignments)
    if (fold < 0 || fold >= plan.fold_count)
      throw ValidationError("fold plan: subject '" + subject + "' assigned to fold " +
                            std::to_string(fold) + " outside [0, " +
                            std::to_string(plan.fold_count) + ")");
  return plan;
}

std::pair<SignalRecord, SignalRecord> split_per_subject(const SignalRecord& record,
                                                        double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ArgumentError("train_fraction must lie in (0, 1)");
  const std::size_t n = record.length();
  const std::size_t n_train = static_cast<std::size_t>(std::floor(n * train_fraction));
  const std::size_t n_test = n - n_train;
  if (n_train < static_cast<std::size_t>(kWindowLength) ||
      n_test < static_cast<std::size_t>(kWindowLength))
    throw ArgumentError("split of length-" + std::to_string(n) + " record at fraction " +
                        std::to_string(train_fraction) + " leaves a part shorter than one window");

  SignalRecord train, test;
  train.subject_id = record.subject_id;
  train.sample_rate_hz = record.sample_rate_hz;
  test.subject_id = record.subject_id;
  test.sample_rate_hz = record.sample_rate_hz;
  train.ppg.assign(record.ppg.begin(), record.ppg.begin() + n_train);
  train.abp.assign(record.abp.begin(), record.abp.begin() + n_train);
  test.ppg.assign(record.ppg.begin() + n_train, record.ppg.end());
  test.abp.assign(record.abp.begin() + n_train, record.abp.end());
  return {std::move(train), std::move(test)};
}

}  // namespace ppg2abp::io
