#include "ppg2abp/cyclegan.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <utility>

#include "ppg2abp/errors.hpp"

namespace ppg2abp::gan {

namespace {

constexpr double kLogEps = 1e-7;

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

using NamedParams = std::vector<std::pair<std::string, ad::Tensor*>>;

NamedParams collect_params(PatModel& model, bool generators) {
  NamedParams out;
  const auto grab = [&out](const std::string& name, ad::Tensor& t) {
    out.emplace_back(name, &t);
  };
  if (generators) {
    model.G.for_each_param("G.", grab);
    model.F.for_each_param("F.", grab);
  } else {
    model.D_X.for_each_param("D_X.", grab);
    model.D_Y.for_each_param("D_Y.", grab);
  }
  return out;
}

bool all_finite(std::initializer_list<double> values) {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

// -mean(log(clamp(d))) when negate, +mean otherwise.
int mean_log(ad::Graph& g, int d, bool negate) {
  const int m = g.mean_all(g.log_(g.clamp(d, kLogEps, 1.0 - kLogEps)));
  return negate ? g.affine(m, -1.0, 0.0) : m;
}

}  // namespace

GanForm gan_form_from_string(const std::string& name) {
  if (name == "log") return GanForm::kLog;
  if (name == "log_saturating") return GanForm::kLogSaturating;
  if (name == "least_squares") return GanForm::kLeastSquares;
  throw ArgumentError("unknown gan_form '" + name +
                      "' (expected log, log_saturating, or least_squares)");
}

std::string to_string(GanForm form) {
  switch (form) {
    case GanForm::kLog: return "log";
    case GanForm::kLogSaturating: return "log_saturating";
    case GanForm::kLeastSquares: return "least_squares";
  }
  throw ArgumentError("unknown gan_form value");
}

ReplayBuffer::ReplayBuffer(int capacity, std::uint64_t seed, double swap_prob)
    : capacity_(capacity), swap_prob_(swap_prob), stream_(seed) {
  if (capacity < 1) throw ArgumentError("replay buffer capacity must be positive");
  if (swap_prob < 0.0 || swap_prob > 1.0)
    throw ArgumentError("replay buffer swap probability must lie in [0, 1]");
  items_.reserve(static_cast<std::size_t>(capacity));
}

std::vector<double> ReplayBuffer::push(std::vector<double> fake) {
  if (items_.size() < static_cast<std::size_t>(capacity_)) {
    items_.push_back(fake);
    return fake;
  }
  // One uniform draw per push once full; a second draw picks the slot.
  if (stream_.uniform() < swap_prob_) {
    const std::size_t slot = stream_.index(items_.size());
    std::vector<double> stored = std::move(items_[slot]);
    items_[slot] = std::move(fake);
    return stored;
  }
  return fake;
}

PatModel PatModel::create(const nets::GeneratorConfig& gen_cfg,
                          const nets::DiscriminatorConfig& disc_cfg, double lambda_cyc,
                          int buffer_size, std::uint64_t seed) {
  if (lambda_cyc <= 0) throw ArgumentError("lambda_cyc must be positive");
  PatModel m;
  m.G = nets::GeneratorParams::create(gen_cfg, rng::derive(seed, "init.G"));
  m.F = nets::GeneratorParams::create(gen_cfg, rng::derive(seed, "init.F"));
  m.D_X = nets::DiscriminatorParams::create(disc_cfg, rng::derive(seed, "init.D_X"));
  m.D_Y = nets::DiscriminatorParams::create(disc_cfg, rng::derive(seed, "init.D_Y"));
  m.lambda_cyc = lambda_cyc;
  m.fake_x_pool = ReplayBuffer(buffer_size, rng::derive(seed, "replay.x"));
  m.fake_y_pool = ReplayBuffer(buffer_size, rng::derive(seed, "replay.y"));
  return m;
}

void PatModel::for_each_param(const nets::ParamVisitor& visit) {
  G.for_each_param("G.", visit);
  F.for_each_param("F.", visit);
  D_X.for_each_param("D_X.", visit);
  D_Y.for_each_param("D_Y.", visit);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ArgumentError("epochs must be positive");
  if (batch_size < 1) throw ArgumentError("batch_size must be positive");
  if (lr < 0) throw ArgumentError("lr must be non-negative");
  if (beta1 <= 0 || beta1 >= 1) throw ArgumentError("beta1 must lie in (0, 1)");
  if (buffer_size < 1) throw ArgumentError("buffer_size must be positive");
}

int adversarial_loss(ad::Graph& g, int d_real, int d_fake, LossSide side, GanForm form) {
  if (side == LossSide::kDiscriminator && d_real < 0)
    throw ArgumentError("discriminator-side loss needs real patch scores");
  const int one_minus_fake = g.affine(d_fake, -1.0, 1.0);
  if (side == LossSide::kGenerator) {
    switch (form) {
      case GanForm::kLog:
        return mean_log(g, d_fake, true);
      case GanForm::kLogSaturating:
        return mean_log(g, one_minus_fake, false);
      case GanForm::kLeastSquares:
        return g.mean_all(g.square(g.affine(d_fake, 1.0, -1.0)));
    }
  }
  switch (form) {
    case GanForm::kLog:
    case GanForm::kLogSaturating:
      return g.affine(g.add(mean_log(g, d_real, false), mean_log(g, one_minus_fake, false)),
                      -1.0, 0.0);
    case GanForm::kLeastSquares:
      return g.add(g.mean_all(g.square(g.affine(d_real, 1.0, -1.0))),
                   g.mean_all(g.square(d_fake)));
  }
  throw ArgumentError("unknown gan_form value");
}

int cycle_loss(ad::Graph& g, int x, int x_rec, int y, int y_rec) {
  const int lx = g.mean_all(g.abs_(g.sub(x_rec, x)));
  const int ly = g.mean_all(g.abs_(g.sub(y_rec, y)));
  return g.add(lx, ly);
}

int total_objective(ad::Graph& g, int gan_G, int gan_F, int cyc, double lambda_cyc) {
  if (lambda_cyc <= 0) throw ArgumentError("lambda_cyc must be positive");
  return g.add(g.add(gan_G, gan_F), g.affine(cyc, lambda_cyc, 0.0));
}

void WindowPool::add(const dsp::WindowBatch& batch) {
  if (batch.window_len != window_len)
    throw ShapeError("window length mismatch between pool and batch");
  for (std::size_t i = 0; i < batch.count(); ++i) {
    const double* row = batch.row(i);
    windows.emplace_back(row, row + window_len);
    sources.push_back(batch.source_id);
  }
}

PreparedRecord prepare_record(const io::SignalRecord& record, const PreprocConfig& preproc) {
  PreparedRecord out;
  out.subject_id = record.subject_id;
  out.ppg_filtered = dsp::fft_filter(record.ppg, record.sample_rate_hz, preproc.ppg_low_hz,
                                     preproc.ppg_high_hz);
  out.abp_filtered =
      dsp::fft_filter(record.abp, record.sample_rate_hz, std::nullopt, preproc.abp_high_hz);
  auto [ppg_n, ppg_norm] = dsp::normalize(out.ppg_filtered);
  auto [abp_n, abp_norm] = dsp::normalize(out.abp_filtered);
  out.ppg_norm = ppg_norm;
  out.abp_norm = abp_norm;
  out.ppg_windows = dsp::segment_windows(ppg_n, ppg_norm, record.subject_id);
  out.abp_windows = dsp::segment_windows(abp_n, abp_norm, record.subject_id);
  return out;
}

Trainer::Trainer(PatModel& model, const TrainConfig& cfg)
    : model_(model),
      cfg_(cfg),
      opt_g_(ad::AdamConfig{cfg.lr, cfg.beta1, 0.999, 1e-8}),
      opt_d_(ad::AdamConfig{cfg.lr, cfg.beta1, 0.999, 1e-8}),
      sampler_(rng::derive(cfg.seed, "trainer.sampler")) {
  cfg_.validate();
}

void Trainer::set_generator_phase(bool generator_phase) {
  for (auto& [name, t] : collect_params(model_, true)) t->set_requires_grad(generator_phase);
  for (auto& [name, t] : collect_params(model_, false)) t->set_requires_grad(!generator_phase);
}

ad::Tensor Trainer::gather_batch(const WindowPool& pool,
                                 const std::vector<std::size_t>& order,
                                 std::size_t first) const {
  const int len = pool.window_len;
  ad::Tensor batch({cfg_.batch_size, 1, len});
  for (int i = 0; i < cfg_.batch_size; ++i) {
    const std::vector<double>& w = pool.windows[order[first + i]];
    std::copy(w.begin(), w.end(), batch.data.begin() + static_cast<std::size_t>(i) * len);
  }
  return batch;
}

StepMetrics Trainer::train_step(const ad::Tensor& batch_x, const ad::Tensor& batch_y) {
  if (batch_x.shape.size() != 3 || batch_y.shape.size() != 3 || batch_x.shape[1] != 1 ||
      batch_y.shape[1] != 1)
    throw ShapeError("training batches must be [batch, 1, len]");
  ++step_;
  StepMetrics metrics;
  metrics.step = step_;

  std::vector<std::vector<double>> fakes_x, fakes_y;
  {
    // Generators move; discriminators only judge.
    set_generator_phase(true);
    ad::Graph g;
    const int x = g.constant(batch_x);
    const int y = g.constant(batch_y);
    const int fake_y = nets::generator_forward(g, model_.G, x);
    const int fake_x = nets::generator_forward(g, model_.F, y);
    const int d_fake_y = nets::discriminator_forward(g, model_.D_Y, fake_y);
    const int d_fake_x = nets::discriminator_forward(g, model_.D_X, fake_x);
    const int rec_x = nets::generator_forward(g, model_.F, fake_y);
    const int rec_y = nets::generator_forward(g, model_.G, fake_x);
    const int gan_G = adversarial_loss(g, -1, d_fake_y, LossSide::kGenerator, cfg_.gan_form);
    const int gan_F = adversarial_loss(g, -1, d_fake_x, LossSide::kGenerator, cfg_.gan_form);
    const int cyc = cycle_loss(g, x, rec_x, y, rec_y);
    const int total = total_objective(g, gan_G, gan_F, cyc, model_.lambda_cyc);
    metrics.loss_gan_G = g.scalar(gan_G);
    metrics.loss_gan_F = g.scalar(gan_F);
    metrics.loss_cyc = g.scalar(cyc);
    if (!all_finite({metrics.loss_gan_G, metrics.loss_gan_F, metrics.loss_cyc}))
      throw TrainingDivergedError(step_);
    g.backward(total);
    opt_g_.step(collect_params(model_, true));

    const ad::Tensor& fy = g.value(fake_y);
    const ad::Tensor& fx = g.value(fake_x);
    const int ly = fy.shape[2], lx = fx.shape[2];
    for (int b = 0; b < fy.shape[0]; ++b) {
      const double* row = fy.data.data() + static_cast<std::size_t>(b) * ly;
      fakes_y.push_back(model_.fake_y_pool.push(std::vector<double>(row, row + ly)));
    }
    for (int b = 0; b < fx.shape[0]; ++b) {
      const double* row = fx.data.data() + static_cast<std::size_t>(b) * lx;
      fakes_x.push_back(model_.fake_x_pool.push(std::vector<double>(row, row + lx)));
    }
  }
  {
    // Discriminators move against real windows and replayed fakes.
    set_generator_phase(false);
    ad::Graph g;
    const auto stack = [&g](const std::vector<std::vector<double>>& rows) {
      const int len = static_cast<int>(rows.front().size());
      ad::Tensor t({static_cast<int>(rows.size()), 1, len});
      for (std::size_t b = 0; b < rows.size(); ++b)
        std::copy(rows[b].begin(), rows[b].end(), t.data.begin() + b * len);
      return g.constant(std::move(t));
    };
    const int real_x = g.constant(batch_x);
    const int real_y = g.constant(batch_y);
    const int d_real_x = nets::discriminator_forward(g, model_.D_X, real_x);
    const int d_fake_x = nets::discriminator_forward(g, model_.D_X, stack(fakes_x));
    const int d_real_y = nets::discriminator_forward(g, model_.D_Y, real_y);
    const int d_fake_y = nets::discriminator_forward(g, model_.D_Y, stack(fakes_y));
    const int loss_dx =
        adversarial_loss(g, d_real_x, d_fake_x, LossSide::kDiscriminator, cfg_.gan_form);
    const int loss_dy =
        adversarial_loss(g, d_real_y, d_fake_y, LossSide::kDiscriminator, cfg_.gan_form);
    metrics.loss_D_X = g.scalar(loss_dx);
    metrics.loss_D_Y = g.scalar(loss_dy);
    if (!all_finite({metrics.loss_D_X, metrics.loss_D_Y}))
      throw TrainingDivergedError(step_);
    g.backward(g.add(loss_dx, loss_dy));
    opt_d_.step(collect_params(model_, false));
  }
  for (auto& [name, t] : collect_params(model_, true)) t->set_requires_grad(true);
  return metrics;
}

std::vector<StepMetrics> Trainer::train(const WindowPool& pool_x, const WindowPool& pool_y) {
  if (pool_x.windows.empty() || pool_y.windows.empty())
    throw ArgumentError("training pools must be non-empty");
  const std::size_t per_epoch =
      std::min(pool_x.windows.size(), pool_y.windows.size()) /
      static_cast<std::size_t>(cfg_.batch_size);
  if (per_epoch == 0) throw ArgumentError("batch_size exceeds the smaller window pool");

  std::vector<std::size_t> order_x(pool_x.windows.size());
  std::vector<std::size_t> order_y(pool_y.windows.size());
  for (std::size_t i = 0; i < order_x.size(); ++i) order_x[i] = i;
  for (std::size_t i = 0; i < order_y.size(); ++i) order_y[i] = i;

  std::vector<StepMetrics> history;
  history.reserve(static_cast<std::size_t>(cfg_.epochs) * per_epoch);
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    sampler_.shuffle(order_x);
    sampler_.shuffle(order_y);
    for (std::size_t s = 0; s < per_epoch; ++s) {
      const std::size_t first = s * static_cast<std::size_t>(cfg_.batch_size);
      history.push_back(
          train_step(gather_batch(pool_x, order_x, first), gather_batch(pool_y, order_y, first)));
    }
  }
  return history;
}

io::SignalRecord translate(PatModel& model, const io::SignalRecord& ppg_record,
                           const dsp::NormParams& abp_norm, const PreprocConfig& preproc) {
  if (!abp_norm.valid())
    throw ArgumentError("translate needs valid pressure normalization parameters");
  const std::vector<double> filtered = dsp::fft_filter(
      ppg_record.ppg, ppg_record.sample_rate_hz, preproc.ppg_low_hz, preproc.ppg_high_hz);
  auto [normalized, ppg_norm] = dsp::normalize(filtered);
  const dsp::WindowBatch in = dsp::segment_windows(normalized, ppg_norm,
                                                   ppg_record.subject_id);

  dsp::WindowBatch out = in;
  out.norm = abp_norm;
  const int len = in.window_len;
  for (std::size_t i = 0; i < in.count(); ++i) {
    ad::Graph g;
    ad::Tensor window({1, 1, len});
    std::copy(in.row(i), in.row(i) + len, window.data.begin());
    const int y = nets::generator_forward(g, model.G, g.constant(std::move(window)));
    const ad::Tensor& yv = g.value(y);
    std::copy(yv.data.begin(), yv.data.end(),
              out.windows.begin() + static_cast<std::size_t>(i) * len);
  }

  const std::vector<double> stitched = dsp::reconstruct_from_windows(out);
  io::SignalRecord result;
  result.subject_id = ppg_record.subject_id;
  result.sample_rate_hz = ppg_record.sample_rate_hz;
  result.abp = dsp::denormalize(stitched, abp_norm);
  result.ppg.assign(ppg_record.ppg.begin(),
                    ppg_record.ppg.begin() + static_cast<std::ptrdiff_t>(stitched.size()));
  return result;
}

void save_loss_history(const std::string& path, const std::vector<StepMetrics>& history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ArgumentError("cannot open loss history file for writing: " + path);
  out << "step,loss_gan_G,loss_gan_F,loss_cyc,loss_D_X,loss_D_Y\n";
  for (const StepMetrics& m : history) {
    out << m.step << ',' << format_value(m.loss_gan_G) << ',' << format_value(m.loss_gan_F)
        << ',' << format_value(m.loss_cyc) << ',' << format_value(m.loss_D_X) << ','
        << format_value(m.loss_D_Y) << '\n';
  }
  if (!out.flush()) throw ArgumentError("failed writing loss history: " + path);
}

}  // namespace ppg2abp::gan
