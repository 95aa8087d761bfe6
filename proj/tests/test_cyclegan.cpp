#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "ppg2abp/cyclegan.hpp"
#include "ppg2abp/dsp.hpp"
#include "ppg2abp/errors.hpp"
#include "ppg2abp/nets.hpp"
#include "ppg2abp/signal_io.hpp"
#include "test_util.hpp"

using namespace ppg2abp;
using ad::Graph;
using ad::Tensor;

namespace {

nets::GeneratorConfig tiny_gen() {
  nets::GeneratorConfig cfg;
  cfg.base_width = 4;
  cfg.res_blocks = 1;
  return cfg;
}

nets::DiscriminatorConfig tiny_disc() {
  nets::DiscriminatorConfig cfg;
  cfg.base_width = 4;
  return cfg;
}

gan::PatModel tiny_model(std::uint64_t seed) {
  return gan::PatModel::create(tiny_gen(), tiny_disc(), 10.0, 50, seed);
}

// [count, 1, 256] stacks of synthetic normalized windows
Tensor window_batch(std::uint64_t seed, int count) {
  rng::Stream rs(seed);
  Tensor t({count, 1, 256});
  for (auto& v : t.data) v = rs.uniform(-0.9, 0.9);
  return t;
}

std::vector<double> flatten_params(gan::PatModel& m) {
  std::vector<double> all;
  m.for_each_param([&](const std::string&, Tensor& t) {
    all.insert(all.end(), t.data.begin(), t.data.end());
  });
  return all;
}

double disc_scalar_loss(double d_real, double d_fake, gan::LossSide side, gan::GanForm form) {
  Graph g;
  int real = g.constant({1, 1, 2}, {d_real, d_real});
  int fake = g.constant({1, 1, 2}, {d_fake, d_fake});
  int loss = gan::adversarial_loss(g, side == gan::LossSide::kGenerator ? -1 : real, fake,
                                   side, form);
  return g.scalar(loss);
}

}  // namespace

TEST_SUITE("cyclegan") {

TEST_CASE("loss form names round trip") {
  CHECK(gan::gan_form_from_string("log") == gan::GanForm::kLog);
  CHECK(gan::gan_form_from_string("log_saturating") == gan::GanForm::kLogSaturating);
  CHECK(gan::gan_form_from_string("least_squares") == gan::GanForm::kLeastSquares);
  CHECK(gan::to_string(gan::GanForm::kLog) == "log");
  CHECK(gan::to_string(gan::GanForm::kLeastSquares) == "least_squares");
  CHECK_THROWS_AS((void)gan::gan_form_from_string("wasserstein"), ArgumentError);
}

TEST_CASE("discriminator loss at the indifferent fixed point is 2 log 2") {
  double v = disc_scalar_loss(0.5, 0.5, gan::LossSide::kDiscriminator, gan::GanForm::kLog);
  CHECK(std::abs(v - 1.3862943611198906) < 1e-12);
}

TEST_CASE("perfect discrimination drives the log loss to zero") {
  double v = disc_scalar_loss(1.0 - 1e-9, 1e-9, gan::LossSide::kDiscriminator,
                              gan::GanForm::kLog);
  CHECK(std::abs(v) < 1e-6);
}

TEST_CASE("generator losses at reference points") {
  using gan::GanForm;
  using gan::LossSide;
  // non-saturating: -log d_fake
  CHECK(std::abs(disc_scalar_loss(-1, 0.5, LossSide::kGenerator, GanForm::kLog) -
                 0.69314718055994529) < 1e-12);
  CHECK(std::abs(disc_scalar_loss(-1, 1.0, LossSide::kGenerator, GanForm::kLog)) < 1e-6);
  // literal saturating form: +log(1 - d_fake)
  CHECK(std::abs(disc_scalar_loss(-1, 0.5, LossSide::kGenerator, GanForm::kLogSaturating) -
                 (-0.69314718055994529)) < 1e-12);
  // least squares: (d_fake - 1)^2
  CHECK(std::abs(disc_scalar_loss(-1, 1.0, LossSide::kGenerator, GanForm::kLeastSquares)) <
        1e-12);
  CHECK(std::abs(disc_scalar_loss(-1, 0.5, LossSide::kGenerator, GanForm::kLeastSquares) -
                 0.25) < 1e-12);
  // least squares discriminator at the indifferent point
  CHECK(std::abs(disc_scalar_loss(0.5, 0.5, gan::LossSide::kDiscriminator,
                                  GanForm::kLeastSquares) -
                 0.5) < 1e-12);
}

TEST_CASE("cycle loss measures both reconstruction errors") {
  Graph g;
  int x = g.constant({1, 1, 4}, {0.1, 0.2, 0.3, 0.4});
  int y = g.constant({1, 1, 4}, {-0.5, 0.5, -0.5, 0.5});

  int perfect = gan::cycle_loss(g, x, x, y, y);
  CHECK(g.scalar(perfect) == 0.0);

  int x_off = g.affine(x, 1.0, 0.5);  // |x_rec - x| = 0.5 everywhere
  int shifted = gan::cycle_loss(g, x, x_off, y, y);
  CHECK(g.scalar(shifted) == doctest::Approx(0.5).epsilon(1e-12));

  int y_off = g.affine(y, 1.0, -0.25);
  int both = gan::cycle_loss(g, x, x_off, y, y_off);
  CHECK(g.scalar(both) == doctest::Approx(0.75).epsilon(1e-12));

  // symmetric in the two domains
  int swapped = gan::cycle_loss(g, y, y_off, x, x_off);
  CHECK(g.scalar(swapped) == g.scalar(both));
}

TEST_CASE("total objective is linear with weight ten by default") {
  Graph g;
  int a = g.constant({1}, {1.0});
  int b = g.constant({1}, {1.0});
  int c = g.constant({1}, {0.2});
  int total = gan::total_objective(g, a, b, c, 10.0);
  CHECK(std::abs(g.scalar(total) - 4.0) < 1e-12);

  int a2 = g.constant({1}, {0.37});
  int b2 = g.constant({1}, {-1.25});
  int c2 = g.constant({1}, {0.61});
  int total2 = gan::total_objective(g, a2, b2, c2, 10.0);
  CHECK(std::abs(g.scalar(total2) - (0.37 - 1.25 + 6.1)) < 1e-12);

  CHECK_THROWS_AS((void)gan::total_objective(g, a, b, c, 0.0), ArgumentError);
  gan::PatModel defaults;
  CHECK(defaults.lambda_cyc == 10.0);
}

TEST_CASE("replay buffer fills first and swaps about half the time after") {
  gan::ReplayBuffer pool(50, 123);
  CHECK(pool.capacity() == 50);

  // distinct payloads so a swap is observable
  for (int i = 0; i < 50; ++i) {
    auto out = pool.push({static_cast<double>(i)});
    CHECK(out == std::vector<double>{static_cast<double>(i)});
  }
  CHECK(pool.size() == 50);

  int swaps = 0;
  const int pushes = 4000;
  for (int i = 0; i < pushes; ++i) {
    auto out = pool.push({static_cast<double>(100 + i)});
    if (out != std::vector<double>{static_cast<double>(100 + i)}) ++swaps;
    CHECK(pool.size() == 50);
  }
  double rate = static_cast<double>(swaps) / pushes;
  CHECK(rate > 0.45);
  CHECK(rate < 0.55);
}

TEST_CASE("replay buffer is seeded") {
  gan::ReplayBuffer a(10, 5), b(10, 5);
  std::vector<double> seq_a, seq_b;
  for (int i = 0; i < 100; ++i) {
    seq_a.push_back(a.push({static_cast<double>(i)})[0]);
    seq_b.push_back(b.push({static_cast<double>(i)})[0]);
  }
  CHECK(seq_a == seq_b);
}

TEST_CASE("record preparation filters, normalizes, and windows both channels") {
  auto rec = io::generate_synthetic_pair(21, 1024);
  auto prep = gan::prepare_record(rec, {});
  CHECK(prep.subject_id == rec.subject_id);
  CHECK(prep.ppg_filtered.size() == 1024);
  CHECK(prep.abp_filtered.size() == 1024);
  CHECK(prep.ppg_norm.valid());
  CHECK(prep.abp_norm.valid());
  REQUIRE(prep.ppg_windows.count() == 5);
  REQUIRE(prep.abp_windows.count() == 5);
  CHECK(prep.ppg_windows.source_id == rec.subject_id);
  CHECK(prep.abp_windows.source_id == rec.subject_id);
  for (std::size_t w = 0; w < prep.ppg_windows.count(); ++w)
    for (int i = 0; i < 256; ++i) {
      CHECK(prep.ppg_windows.row(w)[i] >= -1.0);
      CHECK(prep.ppg_windows.row(w)[i] <= 1.0);
    }
}

TEST_CASE("one training step reports finite losses and counts steps") {
  auto model = tiny_model(9);
  gan::TrainConfig cfg;
  cfg.batch_size = 2;
  gan::Trainer trainer(model, cfg);

  auto mx = window_batch(1, 2);
  auto my = window_batch(2, 2);
  auto m1 = trainer.train_step(mx, my);
  CHECK(m1.step == 1);
  CHECK(std::isfinite(m1.loss_gan_G));
  CHECK(std::isfinite(m1.loss_gan_F));
  CHECK(std::isfinite(m1.loss_cyc));
  CHECK(std::isfinite(m1.loss_D_X));
  CHECK(std::isfinite(m1.loss_D_Y));
  CHECK(m1.loss_cyc > 0.0);

  auto m2 = trainer.train_step(mx, my);
  CHECK(m2.step == 2);
  CHECK(trainer.step() == 2);
}

TEST_CASE("zero learning rate freezes every parameter bit") {
  auto model = tiny_model(10);
  gan::TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.lr = 0.0;
  gan::Trainer trainer(model, cfg);

  auto before = flatten_params(model);
  (void)trainer.train_step(window_batch(3, 2), window_batch(4, 2));
  auto after = flatten_params(model);
  CHECK(before == after);
}

TEST_CASE("training steps are deterministic given the seed") {
  auto run = [](std::uint64_t seed) {
    auto model = gan::PatModel::create(tiny_gen(), tiny_disc(), 10.0, 50, seed);
    gan::TrainConfig cfg;
    cfg.batch_size = 2;
    cfg.seed = seed;
    gan::Trainer trainer(model, cfg);
    std::vector<gan::StepMetrics> metrics;
    for (int i = 0; i < 3; ++i)
      metrics.push_back(trainer.train_step(window_batch(30, 2), window_batch(31, 2)));
    return std::make_pair(metrics, flatten_params(model));
  };

  auto [ma, pa] = run(42);
  auto [mb, pb] = run(42);
  REQUIRE(ma.size() == mb.size());
  for (std::size_t i = 0; i < ma.size(); ++i) {
    CHECK(ma[i].loss_gan_G == mb[i].loss_gan_G);
    CHECK(ma[i].loss_gan_F == mb[i].loss_gan_F);
    CHECK(ma[i].loss_cyc == mb[i].loss_cyc);
    CHECK(ma[i].loss_D_X == mb[i].loss_D_X);
    CHECK(ma[i].loss_D_Y == mb[i].loss_D_Y);
  }
  CHECK(pa == pb);

  auto [mc, pc] = run(43);
  CHECK(pa != pc);
}

TEST_CASE("non-finite losses raise a diverged error naming the step") {
  auto model = tiny_model(11);
  // the head taints y_rec = G(F(y)) through tanh, so the cycle loss itself
  // goes NaN; interior relus would swallow a stem-side NaN instead
  model.G.head_w.data[0] = std::nan("");
  gan::TrainConfig cfg;
  cfg.batch_size = 1;
  gan::Trainer trainer(model, cfg);
  CHECK_THROWS_AS((void)trainer.train_step(window_batch(5, 1), window_batch(6, 1)),
                  TrainingDivergedError);
}

TEST_CASE("the epoch loop consumes both pools in seeded batches") {
  auto rec_a = io::generate_synthetic_pair(1, 2176);  // 11 windows
  auto rec_b = io::generate_synthetic_pair(2, 1984);  // 10 windows
  auto prep_a = gan::prepare_record(rec_a, {});
  auto prep_b = gan::prepare_record(rec_b, {});

  gan::WindowPool pool_x, pool_y;
  pool_x.add(prep_a.ppg_windows);
  pool_y.add(prep_b.abp_windows);
  CHECK(pool_x.windows.size() == 11);
  CHECK(pool_y.windows.size() == 10);
  CHECK(pool_x.sources[0] == rec_a.subject_id);

  auto model = tiny_model(12);
  gan::TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;  // min(11, 10) / 4 -> 2 steps per epoch
  gan::Trainer trainer(model, cfg);
  auto history = trainer.train(pool_x, pool_y);
  REQUIRE(history.size() == 6);
  for (std::size_t i = 0; i < history.size(); ++i)
    CHECK(history[i].step == static_cast<long>(i + 1));

  gan::TrainConfig starving;
  starving.epochs = 1;
  starving.batch_size = 64;
  auto model2 = tiny_model(13);
  gan::Trainer hungry(model2, starving);
  CHECK_THROWS_AS((void)hungry.train(pool_x, pool_y), ArgumentError);
}

TEST_CASE("translation is the documented pipeline composition") {
  auto rec = io::generate_synthetic_pair(3, 1000);
  auto model = tiny_model(14);
  dsp::NormParams abp_norm{60.0, 160.0};

  auto out = gan::translate(model, rec, abp_norm);

  // independent recomposition from the pipeline pieces
  auto filtered = dsp::fft_filter(rec.ppg, rec.sample_rate_hz, 0.1, 8.0);
  auto [norm_sig, ppg_norm] = dsp::normalize(filtered);
  auto batch = dsp::segment_windows(norm_sig, ppg_norm, rec.subject_id);
  dsp::WindowBatch translated = batch;
  translated.norm = abp_norm;
  for (std::size_t w = 0; w < batch.count(); ++w) {
    Graph g;
    int x = g.constant({1, 1, 256},
                       std::vector<double>(batch.row(w), batch.row(w) + 256));
    int y = nets::generator_forward(g, model.G, x);
    const auto& val = g.value(y).data;
    std::copy(val.begin(), val.end(), translated.windows.begin() + 256 * w);
  }
  auto stitched = dsp::reconstruct_from_windows(translated);
  auto expected = dsp::denormalize(stitched, abp_norm);

  REQUIRE(out.abp.size() == expected.size());
  REQUIRE(out.abp.size() == 832);  // last window offset 576 + 256
  for (std::size_t i = 0; i < expected.size(); ++i)
    CHECK(std::abs(out.abp[i] - expected[i]) < 1e-12);

  CHECK(out.subject_id == rec.subject_id);
  CHECK(out.sample_rate_hz == rec.sample_rate_hz);
  REQUIRE(out.ppg.size() == 832);
  for (std::size_t i = 0; i < out.ppg.size(); ++i) CHECK(out.ppg[i] == rec.ppg[i]);
}

TEST_CASE("translation rejects unusable inputs") {
  auto model = tiny_model(15);
  auto rec = io::generate_synthetic_pair(4, 300);
  dsp::NormParams good{60.0, 160.0};
  CHECK_NOTHROW((void)gan::translate(model, rec, good));

  io::SignalRecord tiny = rec;
  tiny.ppg.resize(100);
  tiny.abp.resize(100);
  CHECK_THROWS_AS((void)gan::translate(model, tiny, good), ArgumentError);

  dsp::NormParams bad{160.0, 60.0};
  CHECK_THROWS_AS((void)gan::translate(model, rec, bad), ArgumentError);
}

TEST_CASE("loss history lands on disk with a fixed header") {
  testutil::TempDir dir("loss-csv");
  std::vector<gan::StepMetrics> history(3);
  for (int i = 0; i < 3; ++i) {
    history[i].step = i + 1;
    history[i].loss_gan_G = 0.5 + i;
    history[i].loss_cyc = 0.25;
  }
  const std::string path = dir.str("loss.csv");
  gan::save_loss_history(path, history);
  auto text = testutil::read_file(path);
  CHECK(text.rfind("step,loss_gan_G,loss_gan_F,loss_cyc,loss_D_X,loss_D_Y\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}

}  // TEST_SUITE
