#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ppg2abp/autodiff.hpp"
#include "ppg2abp/dsp.hpp"
#include "ppg2abp/nets.hpp"
#include "ppg2abp/rng.hpp"
#include "ppg2abp/signal_io.hpp"

namespace ppg2abp::gan {

/// Loss shape for the adversarial terms. kLog pairs the usual discriminator
/// cross-entropy with the non-saturating generator loss -log D(fake);
/// kLogSaturating keeps the literal log(1 - D(fake)) generator objective;
/// kLeastSquares scores squared distance from the real/fake labels.
enum class GanForm { kLog, kLogSaturating, kLeastSquares };

GanForm gan_form_from_string(const std::string& name);
std::string to_string(GanForm form);

enum class LossSide { kGenerator, kDiscriminator };

/// Pool of recently generated fake windows. Once full, each push swaps the
/// fresh fake for a stored one with probability swap_prob, so discriminators
/// also revisit the generators' past output.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity = 50, std::uint64_t seed = 0, double swap_prob = 0.5);

  /// Stores the fake and returns the sample to show the discriminator.
  std::vector<double> push(std::vector<double> fake);

  int capacity() const { return capacity_; }
  std::size_t size() const { return items_.size(); }
  double swap_prob() const { return swap_prob_; }

 private:
  int capacity_;
  double swap_prob_;
  rng::Stream stream_;
  std::vector<std::vector<double>> items_;
};

/// The full translation model: G maps pulse windows to pressure windows,
/// F maps back, and each domain has its own patch discriminator judging
/// real-vs-generated windows (D_X on the pulse side, D_Y on pressure).
struct PatModel {
  nets::GeneratorParams G, F;
  nets::DiscriminatorParams D_X, D_Y;
  double lambda_cyc = 10.0;
  ReplayBuffer fake_x_pool, fake_y_pool;

  static PatModel create(const nets::GeneratorConfig& gen_cfg,
                         const nets::DiscriminatorConfig& disc_cfg, double lambda_cyc,
                         int buffer_size, std::uint64_t seed);

  /// Visits every learnable tensor under "G." / "F." / "D_X." / "D_Y.".
  void for_each_param(const nets::ParamVisitor& visit);
};

struct TrainConfig {
  int epochs = 80;
  int batch_size = 4;
  double lr = 2e-4;
  double beta1 = 0.5;
  std::uint64_t seed = 1;
  int buffer_size = 50;
  GanForm gan_form = GanForm::kLog;

  void validate() const;
};

// Loss graph builders. Patch maps are graph nodes with values in (0, 1)
// (clamped to [1e-7, 1 - 1e-7] before any log). All return scalar nodes.

/// d_real may be -1 on the generator side, where only d_fake matters.
int adversarial_loss(ad::Graph& g, int d_real, int d_fake, LossSide side, GanForm form);

/// Mean absolute reconstruction error of both cycles, summed.
int cycle_loss(ad::Graph& g, int x, int x_rec, int y, int y_rec);

/// gan_G + gan_F + lambda_cyc * cyc.
int total_objective(ad::Graph& g, int gan_G, int gan_F, int cyc, double lambda_cyc);

struct StepMetrics {
  long step = 0;
  double loss_gan_G = 0, loss_gan_F = 0, loss_cyc = 0, loss_D_X = 0, loss_D_Y = 0;
};

/// Training windows from one domain, pooled across records. sources keeps
/// the owning subject of every window so splits can be audited.
struct WindowPool {
  int window_len = io::kWindowLength;
  std::vector<std::vector<double>> windows;
  std::vector<std::string> sources;

  void add(const dsp::WindowBatch& batch);
};

struct PreprocConfig {
  double ppg_low_hz = 0.1;  // pulse channel band-pass
  double ppg_high_hz = 8.0;
  double abp_high_hz = 5.0; // pressure channel low-pass
};

/// One record taken through filtering, normalization, and windowing; keeps
/// the pieces every later stage needs (norm params for inversion, filtered
/// pressure as the evaluation reference).
struct PreparedRecord {
  std::string subject_id;
  std::vector<double> ppg_filtered, abp_filtered;
  dsp::NormParams ppg_norm, abp_norm;
  dsp::WindowBatch ppg_windows, abp_windows;
};

PreparedRecord prepare_record(const io::SignalRecord& record, const PreprocConfig& preproc);

/// Alternating optimization: each step updates both generators against the
/// frozen discriminators (adversarial + cycle terms), then both
/// discriminators on real windows versus replay-buffer fakes.
class Trainer {
 public:
  Trainer(PatModel& model, const TrainConfig& cfg);

  /// batch_x and batch_y are [batch, 1, len] window stacks; the two sides
  /// need not be paired. Throws TrainingDivergedError on non-finite loss.
  StepMetrics train_step(const ad::Tensor& batch_x, const ad::Tensor& batch_y);

  /// Full seeded loop: per epoch, both pools are shuffled independently and
  /// consumed in batches (leftover windows drop). Returns per-step metrics.
  std::vector<StepMetrics> train(const WindowPool& pool_x, const WindowPool& pool_y);

  long step() const { return step_; }

 private:
  ad::Tensor gather_batch(const WindowPool& pool, const std::vector<std::size_t>& order,
                          std::size_t first) const;
  void set_generator_phase(bool generator_phase);

  PatModel& model_;
  TrainConfig cfg_;
  ad::Adam opt_g_, opt_d_;
  rng::Stream sampler_;
  long step_ = 0;
};

/// Translation pipeline for one record's pulse channel: band-pass, normalize,
/// window, run G per window, cross-fade the pieces, then map into pressure
/// units with abp_norm. The result keeps the subject id and sample rate; its
/// pulse channel is the input truncated to the reconstructed length.
io::SignalRecord translate(PatModel& model, const io::SignalRecord& ppg_record,
                           const dsp::NormParams& abp_norm,
                           const PreprocConfig& preproc = {});

void save_loss_history(const std::string& path, const std::vector<StepMetrics>& history);

}  // namespace ppg2abp::gan
