#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace ppg2abp::io {

constexpr double kStandardSampleRate = 125.0;
constexpr int kWindowLength = 256;

/// One subject's paired pulse (PPG) and arterial pressure (ABP) channels.
/// Channels always have equal length; records admitted to training or
/// evaluation carry at least one full window (256 samples).
struct SignalRecord {
  std::string subject_id;
  double sample_rate_hz = kStandardSampleRate;
  std::vector<double> ppg;  // arbitrary units
  std::vector<double> abp;  // mmHg

  std::size_t length() const { return ppg.size(); }
};

/// Subject-disjoint fold assignment: every subject in exactly one fold.
struct FoldPlan {
  int fold_count = 0;
  std::map<std::string, int> assignments;

  std::vector<std::string> subjects_in(int fold) const;
  std::vector<std::string> subjects_not_in(int fold) const;
};

/// Reads a record file: `# subject=<id>` / `# fs=<hz>` header lines, an
/// optional `ppg,abp` column row, then one `<ppg>,<abp>` row per sample.
/// Throws ParseError naming the offending line, ValidationError on invariant
/// breaks. A sample rate other than 125 Hz is rejected unless
/// allow_nonstandard_fs is set.
SignalRecord load_record(const std::string& path, bool allow_nonstandard_fs = false);

void save_record(const SignalRecord& record, const std::string& path);

struct SynthConfig {
  double fundamental_hz = 1.2;       // beat rate of the shared pulse train
  double harmonic_gain = 0.3;        // dicrotic-notch component
  double harmonic_phase = 1.0;       // radians
  double beat_jitter = 0.15;         // per-beat amplitude jitter, fraction
  double abp_min = 60.0;             // mmHg target range
  double abp_max = 160.0;
  double map_gain = 1.5;             // curvature of the beat-train -> ABP map
  double sample_rate_hz = kStandardSampleRate;
};

/// Deterministic synthetic subject: a seeded beat train with per-beat
/// amplitude jitter becomes the PPG channel; the ABP channel is a fixed
/// monotone nonlinear map of the same train scaled into [abp_min, abp_max],
/// so the two channels are genuinely related and the mapping learnable.
SignalRecord generate_synthetic_pair(std::uint64_t seed, std::size_t n_samples,
                                     const SynthConfig& config = {});

/// Seeded shuffle followed by round-robin assignment; fold sizes differ by
/// at most one. Requires k >= 2 and at least k subjects.
FoldPlan make_folds(const std::vector<std::string>& subject_ids, int k, std::uint64_t seed);

std::string fold_plan_to_json(const FoldPlan& plan);
FoldPlan fold_plan_from_json(const std::string& text);

/// Temporal prefix/suffix split (no shuffling). Both parts must admit at
/// least one window.
std::pair<SignalRecord, SignalRecord> split_per_subject(const SignalRecord& record,
                                                        double train_fraction);

}  // namespace ppg2abp::io
