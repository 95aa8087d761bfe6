#include <cstring>
#include <string>
#include <vector>

#include "doctest.h"
#include "ppg2abp/errors.hpp"
#include "ppg2abp/kernels.hpp"
#include "ppg2abp/rng.hpp"
#include "test_util.hpp"

using namespace ppg2abp;
using kernels::ConvDims;

namespace {

// keeps the globally selected variant stable across tests
struct KernelGuard {
  ~KernelGuard() {
    kernels::select(kernels::avx2_kernels() ? "avx2" : "scalar");
  }
};

std::vector<double> random_vec(rng::Stream& rs, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rs.uniform(-1.0, 1.0);
  return v;
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("correlation of [1,2,3] with [1,1] gives [3,5]") {
  ConvDims d{1, 1, 1, 3, 2, 2, 1};
  std::vector<double> x{1, 2, 3}, w{1, 1}, y(2, -99.0);
  kernels::scalar_kernels().conv_fwd(x.data(), w.data(), nullptr, y.data(), d);
  CHECK(y == std::vector<double>{3, 5});
}

TEST_CASE("kernel size one with unit weight is the identity") {
  ConvDims d{1, 1, 1, 5, 5, 1, 1};
  std::vector<double> x{0.5, -1, 2, 3, -4}, w{1}, y(5, 0.0);
  kernels::scalar_kernels().conv_fwd(x.data(), w.data(), nullptr, y.data(), d);
  CHECK(y == x);

  double bias = 10.0;
  kernels::scalar_kernels().conv_fwd(x.data(), w.data(), &bias, y.data(), d);
  for (int i = 0; i < 5; ++i) CHECK(y[i] == x[i] + 10.0);
}

TEST_CASE("input channels accumulate and stride skips") {
  // cin=2: y[t] = sum_c sum_j x[c][t*s+j] * w[c][j]
  ConvDims d{1, 2, 1, 5, 2, 2, 2};
  std::vector<double> x{1, 2, 3, 4, 5,    // channel 0
                        10, 20, 30, 40, 50};  // channel 1
  std::vector<double> w{1, 1, 0.1, 0.1};
  std::vector<double> y(2, 0.0);
  kernels::scalar_kernels().conv_fwd(x.data(), w.data(), nullptr, y.data(), d);
  CHECK(y[0] == doctest::Approx(1 + 2 + 1.0 + 2.0));
  CHECK(y[1] == doctest::Approx(3 + 4 + 3.0 + 4.0));
}

TEST_CASE("gradient kernels accumulate instead of overwrite") {
  ConvDims d{1, 1, 1, 3, 2, 2, 1};
  std::vector<double> w{1, 1}, gy{1, 1};
  std::vector<double> gx(3, 5.0);
  kernels::scalar_kernels().conv_grad_input(gy.data(), w.data(), gx.data(), d);
  CHECK(gx == std::vector<double>{6, 7, 6});  // += [1, 2, 1]

  std::vector<double> x{1, 2, 3}, gw(2, 1.0), gb(1, 2.0);
  kernels::scalar_kernels().conv_grad_weights(x.data(), gy.data(), gw.data(), gb.data(), d);
  CHECK(gw == std::vector<double>{4, 6});  // += [1+2, 2+3]
  CHECK(gb == std::vector<double>{4});     // += 1+1

  kernels::scalar_kernels().conv_grad_weights(x.data(), gy.data(), gw.data(), nullptr, d);
  CHECK(gw == std::vector<double>{7, 11});
}

TEST_CASE("vector and scalar variants agree on random problems") {
  const kernels::Kernels* simd = kernels::avx2_kernels();
  if (!simd) return;  // hardware without the instructions: nothing to compare

  rng::Stream rs(1234);
  const int batches[] = {1, 2, 3};
  const int chans[] = {1, 3, 4, 8};
  const int ks[] = {1, 3, 4, 7};
  const int strides[] = {1, 2, 3};

  for (int rep = 0; rep < 60; ++rep) {
    ConvDims d;
    d.batch = batches[rs.index(3)];
    d.cin = chans[rs.index(4)];
    d.cout = chans[rs.index(4)];
    d.k = ks[rs.index(4)];
    d.stride = strides[rs.index(3)];
    d.lout = 3 + static_cast<int>(rs.index(20));
    d.lin = (d.lout - 1) * d.stride + d.k;

    auto x = random_vec(rs, static_cast<std::size_t>(d.batch * d.cin * d.lin));
    auto w = random_vec(rs, static_cast<std::size_t>(d.cout * d.cin * d.k));
    auto b = random_vec(rs, static_cast<std::size_t>(d.cout));
    auto gy = random_vec(rs, static_cast<std::size_t>(d.batch * d.cout * d.lout));

    std::vector<double> y_s(gy.size()), y_v(gy.size());
    kernels::scalar_kernels().conv_fwd(x.data(), w.data(), b.data(), y_s.data(), d);
    simd->conv_fwd(x.data(), w.data(), b.data(), y_v.data(), d);
    for (std::size_t i = 0; i < y_s.size(); ++i)
      CHECK(testutil::rel_err(y_v[i], y_s[i]) < 1e-10);

    std::vector<double> gx_s(x.size(), 0.0), gx_v(x.size(), 0.0);
    kernels::scalar_kernels().conv_grad_input(gy.data(), w.data(), gx_s.data(), d);
    simd->conv_grad_input(gy.data(), w.data(), gx_v.data(), d);
    for (std::size_t i = 0; i < gx_s.size(); ++i)
      CHECK(testutil::rel_err(gx_v[i], gx_s[i]) < 1e-10);

    std::vector<double> gw_s(w.size(), 0.0), gw_v(w.size(), 0.0);
    std::vector<double> gb_s(b.size(), 0.0), gb_v(b.size(), 0.0);
    kernels::scalar_kernels().conv_grad_weights(x.data(), gy.data(), gw_s.data(), gb_s.data(), d);
    simd->conv_grad_weights(x.data(), gy.data(), gw_v.data(), gb_v.data(), d);
    for (std::size_t i = 0; i < gw_s.size(); ++i)
      CHECK(testutil::rel_err(gw_v[i], gw_s[i]) < 1e-10);
    for (std::size_t i = 0; i < gb_s.size(); ++i)
      CHECK(testutil::rel_err(gb_v[i], gb_s[i]) < 1e-10);
  }
}

TEST_CASE("runtime selection is explicit and validated") {
  KernelGuard guard;

  kernels::select("scalar");
  CHECK(std::string(kernels::active().name) == "scalar");

  if (kernels::avx2_kernels()) {
    kernels::select("avx2");
    CHECK(std::string(kernels::active().name) == "avx2");
  }

  CHECK_THROWS_AS(kernels::select("sse9"), ArgumentError);
  CHECK_THROWS_AS(kernels::select(""), ArgumentError);
}

}  // TEST_SUITE
