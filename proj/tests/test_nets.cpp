#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "ppg2abp/autodiff.hpp"
#include "ppg2abp/errors.hpp"
#include "ppg2abp/nets.hpp"
#include "ppg2abp/rng.hpp"
#include "test_util.hpp"

using namespace ppg2abp;
using ad::Graph;
using ad::Tensor;

namespace {

long conv_params(long cout, long cin, long k) { return cout * cin * k + cout; }
long norm_params(long ch) { return 2 * ch; }

long expected_generator_params(long w, long r) {
  long total = conv_params(w, 1, 7) + norm_params(w);            // stem
  total += conv_params(2 * w, w, 3) + norm_params(2 * w);        // down1
  total += conv_params(4 * w, 2 * w, 3) + norm_params(4 * w);    // down2
  total += r * 2 * (conv_params(4 * w, 4 * w, 3) + norm_params(4 * w));
  total += conv_params(2 * w, 4 * w, 3) + norm_params(2 * w);    // up1
  total += conv_params(w, 2 * w, 3) + norm_params(w);            // up2
  total += conv_params(1, w, 7);                                 // head
  return total;
}

long expected_discriminator_params(long w) {
  long total = conv_params(w, 1, 4);                             // no norm on l1
  total += conv_params(2 * w, w, 4) + norm_params(2 * w);
  total += conv_params(4 * w, 2 * w, 4) + norm_params(4 * w);
  total += conv_params(8 * w, 4 * w, 4) + norm_params(8 * w);
  total += conv_params(1, 8 * w, 4);                             // head
  return total;
}

Tensor random_input(ad::Shape shape, std::uint64_t seed, double amp = 0.9) {
  rng::Stream rs(seed);
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = rs.uniform(-amp, amp);
  return t;
}

// Conv-only replica of the discriminator stack (same shapes, strides, and
// paddings, activations and normalization dropped). Normalization couples
// every position through global moments, so locality claims are probed on
// the stack that actually defines the geometry.
std::vector<double> conv_stack_scores(nets::DiscriminatorParams& p, const Tensor& x) {
  Graph g;
  ad::ConvAttrs s2;
  s2.stride = 2;
  s2.padding = 1;
  ad::ConvAttrs s1;
  s1.padding = 1;
  int h = g.conv1d(g.constant(x), g.param(p.l1_w), g.param(p.l1_b), s2);
  h = g.conv1d(h, g.param(p.l2.w), g.param(p.l2.b), s2);
  h = g.conv1d(h, g.param(p.l3.w), g.param(p.l3.b), s2);
  h = g.conv1d(h, g.param(p.l4.w), g.param(p.l4.b), s1);
  h = g.conv1d(h, g.param(p.out_w), g.param(p.out_b), s1);
  return g.value(h).data;
}

}  // namespace

TEST_SUITE("nets") {

TEST_CASE("generator maps [2,1,256] onto itself with outputs in (-1,1)") {
  nets::GeneratorConfig cfg;
  cfg.base_width = 16;
  cfg.res_blocks = 3;
  auto params = nets::GeneratorParams::create(cfg, 3);

  Tensor x = random_input({2, 1, 256}, 8);
  Graph g;
  int y = nets::generator_forward(g, params, g.constant(x));
  const auto& out = g.value(y);
  REQUIRE(out.shape == ad::Shape{2, 1, 256});
  for (double v : out.data) {
    CHECK(v > -1.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("generator accepts any length divisible by four") {
  nets::GeneratorConfig cfg;
  cfg.base_width = 4;
  cfg.res_blocks = 1;
  auto params = nets::GeneratorParams::create(cfg, 4);

  for (int len : {64, 128, 192}) {
    Graph g;
    int y = nets::generator_forward(g, params, g.constant(random_input({1, 1, len}, 9)));
    CHECK(g.value(y).shape == ad::Shape{1, 1, len});
  }

  Graph g;
  CHECK_THROWS_AS((void)nets::generator_forward(g, params, g.constant(random_input({1, 1, 62}, 9))),
                  ShapeError);
  CHECK_THROWS_AS((void)nets::generator_forward(g, params, g.constant(random_input({1, 2, 64}, 9))),
                  ShapeError);
}

TEST_CASE("discriminator turns a 256 window into 30 patch probabilities") {
  nets::DiscriminatorConfig cfg;
  cfg.base_width = 16;
  auto params = nets::DiscriminatorParams::create(cfg, 5);

  Graph g;
  int y = nets::discriminator_forward(g, params, g.constant(random_input({1, 1, 256}, 10)));
  const auto& out = g.value(y);
  REQUIRE(out.shape == ad::Shape{1, 1, 30});
  for (double v : out.data) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("each patch score is driven by a 70-sample field") {
  CHECK(nets::discriminator_receptive_field() == 70);

  nets::DiscriminatorConfig cfg;
  cfg.base_width = 8;
  auto params = nets::DiscriminatorParams::create(cfg, 6);
  // init keeps weights near zero; rescale so deep paths stay measurable
  params.for_each_param("", [](const std::string& name, Tensor& t) {
    if (name.size() >= 2 && name.compare(name.size() - 2, 2, ".w") == 0)
      for (auto& v : t.data) v *= 50.0;
  });

  Tensor x = random_input({1, 1, 256}, 11);
  auto base = conv_stack_scores(params, x);
  REQUIRE(base.size() == 30);

  // patch 14 covers input samples [8*14 - 23, 8*14 + 46] = [89, 158]
  auto probe = [&](int sample) {
    Tensor bumped = x;
    bumped.data[static_cast<std::size_t>(sample)] += 1.0;
    auto scores = conv_stack_scores(params, bumped);
    return std::abs(scores[14] - base[14]);
  };
  CHECK(probe(89) > 1e-12);
  CHECK(probe(124) > 1e-12);
  CHECK(probe(158) > 1e-12);
  CHECK(probe(88) == 0.0);
  CHECK(probe(159) == 0.0);
  CHECK(probe(0) == 0.0);
  CHECK(probe(255) == 0.0);
}

TEST_CASE("shifting a periodic input by 64 samples shifts patch scores by 8") {
  nets::DiscriminatorConfig cfg;
  cfg.base_width = 8;
  auto params = nets::DiscriminatorParams::create(cfg, 7);

  // 64-periodic content: a 64-sample shift reproduces the same input, so
  // interior patches 8 apart see identical fields through every layer
  rng::Stream rs(12);
  Tensor x({1, 1, 256});
  for (int i = 0; i < 64; ++i) {
    double v = rs.uniform(-0.9, 0.9);
    for (int rep = 0; rep < 4; ++rep) x.data[static_cast<std::size_t>(rep * 64 + i)] = v;
  }

  Graph g;
  int y = nets::discriminator_forward(g, params, g.constant(x));
  const auto& scores = g.value(y).data;
  REQUIRE(scores.size() == 30);
  // patches p and p+8 both pad-free: p in [3, 18]
  for (int p = 3; p <= 18; ++p)
    CHECK(std::abs(scores[static_cast<std::size_t>(p)] -
                   scores[static_cast<std::size_t>(p + 8)]) < 1e-9);
}

TEST_CASE("parameter counts are frozen") {
  nets::GeneratorConfig gen;  // width 64, 9 residual blocks
  auto gp = nets::GeneratorParams::create(gen, 1);
  CHECK(gp.param_count() == 3801345);
  CHECK(gp.param_count() == expected_generator_params(64, 9));

  nets::DiscriminatorConfig disc;  // width 64
  auto dp = nets::DiscriminatorParams::create(disc, 1);
  CHECK(dp.param_count() == 693185);
  CHECK(dp.param_count() == expected_discriminator_params(64));

  long visited = 0;
  gp.for_each_param("", [&](const std::string&, Tensor& t) { visited += t.size(); });
  CHECK(visited == gp.param_count());
  visited = 0;
  dp.for_each_param("", [&](const std::string&, Tensor& t) { visited += t.size(); });
  CHECK(visited == dp.param_count());
}

TEST_CASE("parameter names are unique and structured") {
  nets::GeneratorConfig cfg;
  cfg.base_width = 4;
  cfg.res_blocks = 2;
  auto gp = nets::GeneratorParams::create(cfg, 2);

  std::set<std::string> names;
  gp.for_each_param("G.", [&](const std::string& name, Tensor&) {
    CHECK(name.rfind("G.", 0) == 0);
    CHECK(names.insert(name).second);  // no duplicates
  });
  CHECK(names.count("G.stem.w") == 1);
  CHECK(names.count("G.res0.c1.w") == 1);
  CHECK(names.count("G.res1.c2.gain") == 1);
  CHECK(names.count("G.up2.shift") == 1);
  CHECK(names.count("G.head.w") == 1);

  nets::DiscriminatorConfig dcfg;
  dcfg.base_width = 4;
  auto dp = nets::DiscriminatorParams::create(dcfg, 2);
  std::set<std::string> dnames;
  dp.for_each_param("D.", [&](const std::string& name, Tensor&) {
    CHECK(dnames.insert(name).second);
  });
  CHECK(dnames.count("D.l1.w") == 1);
  CHECK(dnames.count("D.l3.gain") == 1);
  CHECK(dnames.count("D.out.b") == 1);
}

TEST_CASE("initialization is seeded gaussian for weights and fixed for the rest") {
  nets::GeneratorConfig cfg;  // default width: millions of draws tighten the stats
  auto gp = nets::GeneratorParams::create(cfg, 31);

  double sum = 0, sum_sq = 0;
  long n = 0;
  bool aux_ok = true;
  gp.for_each_param("", [&](const std::string& name, Tensor& t) {
    const bool is_weight =
        name.size() >= 2 && name.compare(name.size() - 2, 2, ".w") == 0;
    const bool is_gain =
        name.size() >= 5 && name.compare(name.size() - 5, 5, ".gain") == 0;
    if (is_weight) {
      for (double v : t.data) {
        sum += v;
        sum_sq += v * v;
        ++n;
      }
    } else {
      const double want = is_gain ? 1.0 : 0.0;
      for (double v : t.data) aux_ok = aux_ok && v == want;
    }
  });
  CHECK(aux_ok);
  const double mean = sum / static_cast<double>(n);
  const double stddev = std::sqrt(sum_sq / static_cast<double>(n) - mean * mean);
  CHECK(std::abs(mean) < 1e-4);
  CHECK(stddev > 0.018);
  CHECK(stddev < 0.022);
}

TEST_CASE("creation is deterministic in the seed") {
  nets::GeneratorConfig cfg;
  cfg.base_width = 4;
  cfg.res_blocks = 1;
  auto a = nets::GeneratorParams::create(cfg, 77);
  auto b = nets::GeneratorParams::create(cfg, 77);
  auto c = nets::GeneratorParams::create(cfg, 78);
  CHECK(a.stem.w.data == b.stem.w.data);
  CHECK(a.head_w.data == b.head_w.data);
  CHECK(a.stem.w.data != c.stem.w.data);
}

}  // TEST_SUITE
