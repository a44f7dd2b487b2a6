#include <catch2/catch_amalgamated.hpp>

#include "hwprox/metrics.hpp"
#include "test_util.hpp"

using namespace hwprox;
using Catch::Approx;

TEST_CASE("psnr basics") {
  const HsiCube a = hwtest::random_cube(8, 8, 3, 2);
  CHECK(psnr(a, a) == 100.0);

  HsiCube b = a;
  for (double& v : b.data) v += 0.1;
  CHECK(psnr(a, b) == Approx(20.0).epsilon(1e-12));

  HsiCube c = a;
  c.data.pop_back();
  c.bands = 3;  // mismatched payload caught by shape check below
  HsiCube different(4, 4, 3, 0.0);
  CHECK_THROWS_AS(psnr(a, different), ArgumentError);
}

TEST_CASE("psnr averages per-band values") {
  // band 0: uniform error 0.1 -> 20 dB; band 1: uniform error 0.01 -> 40 dB
  HsiCube ref(4, 4, 2, 0.5);
  HsiCube test = ref;
  for (std::int64_t i = 0; i < 4; ++i)
    for (std::int64_t j = 0; j < 4; ++j) {
      test.at(i, j, 0) += 0.1;
      test.at(i, j, 1) += 0.01;
    }
  CHECK(psnr(ref, test) == Approx(30.0).epsilon(1e-12));
}

TEST_CASE("psnr strictly decreases in mse") {
  const HsiCube ref(6, 6, 2, 0.5);
  double prev = 1e9;
  for (double err : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    HsiCube t = ref;
    for (double& v : t.data) v += err;
    const double p = psnr(ref, t);
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("ssim basics") {
  const HsiCube a = hwtest::random_cube(16, 16, 2, 7);
  CHECK(ssim(a, a) == Approx(1.0).epsilon(1e-12));
  const HsiCube b = hwtest::random_cube(16, 16, 2, 8);
  CHECK(ssim(a, b) == Approx(ssim(b, a)).epsilon(1e-12));
  HsiCube small(8, 8, 1, 0.5);
  CHECK_THROWS_AS(ssim(small, small), ArgumentError);
}

TEST_CASE("ssim of an inverted checkerboard is poor") {
  HsiCube ref(16, 16, 1);
  for (std::int64_t i = 0; i < 16; ++i)
    for (std::int64_t j = 0; j < 16; ++j) ref.at(i, j, 0) = ((i / 2 + j / 2) % 2) ? 1.0 : 0.0;
  HsiCube inv = ref;
  for (double& v : inv.data) v = 1.0 - v;
  CHECK(ssim(ref, inv) < 0.2);
}

TEST_CASE("sam basics") {
  const HsiCube a = hwtest::random_cube(5, 5, 4, 9, 0.1, 1.0);
  CHECK(sam(a, a) == Approx(0.0).margin(1e-5));

  HsiCube doubled = a;
  for (double& v : doubled.data) v *= 2.0;
  CHECK(sam(a, doubled) == Approx(0.0).margin(1e-5));

  HsiCube r(1, 1, 2), t(1, 1, 2);
  r.at(0, 0, 0) = 1.0;
  r.at(0, 0, 1) = 0.0;
  t.at(0, 0, 0) = 0.0;
  t.at(0, 0, 1) = 1.0;
  CHECK(sam(r, t) == Approx(90.0).epsilon(1e-12));

  HsiCube zed(2, 2, 2, 0.0);
  CHECK_THROWS_AS(sam(zed, zed), DegenerateInputError);
}

TEST_CASE("sam skips and counts zero-norm pixels") {
  HsiCube r(1, 2, 2, 0.0), t(1, 2, 2, 0.5);
  r.at(0, 0, 0) = 1.0;  // pixel 0 valid; pixel 1 zero-norm in ref
  t.at(0, 0, 0) = 1.0;
  t.at(0, 0, 1) = 0.0;
  std::int64_t skipped = 0;
  CHECK(sam(r, t, &skipped) == Approx(0.0).margin(1e-5));
  CHECK(skipped == 1);
}

TEST_CASE("ergas basics") {
  const HsiCube a = hwtest::random_cube(6, 6, 3, 10, 0.2, 1.0);
  CHECK(ergas(a, a) == 0.0);

  // single band with RMSE equal to the band mean -> 100
  HsiCube ref(2, 2, 1, 0.5);
  HsiCube test = ref;
  for (double& v : test.data) v += 0.5;
  CHECK(ergas(ref, test) == Approx(100.0).epsilon(1e-12));

  HsiCube zeros(2, 2, 1, 0.0);
  CHECK_THROWS_AS(ergas(zeros, zeros), DegenerateInputError);
}

TEST_CASE("ergas on two bands matches direct arithmetic") {
  HsiCube ref(2, 2, 2);
  HsiCube test(2, 2, 2);
  // band 0: mean 0.5, rmse 0.1; band 1: mean 0.25, rmse 0.05
  for (std::int64_t i = 0; i < 2; ++i)
    for (std::int64_t j = 0; j < 2; ++j) {
      ref.at(i, j, 0) = 0.5;
      test.at(i, j, 0) = 0.6;
      ref.at(i, j, 1) = 0.25;
      test.at(i, j, 1) = 0.3;
    }
  const double expected = 100.0 * std::sqrt(0.5 * (0.04 + 0.04));
  CHECK(ergas(ref, test) == Approx(expected).epsilon(1e-12));
}

TEST_CASE("ergas is invariant under joint scaling") {
  const HsiCube a = hwtest::random_cube(6, 6, 3, 12, 0.2, 1.0);
  const HsiCube b = hwtest::random_cube(6, 6, 3, 13, 0.2, 1.0);
  HsiCube a2 = a, b2 = b;
  for (double& v : a2.data) v *= 3.0;
  for (double& v : b2.data) v *= 3.0;
  CHECK(ergas(a, b) == Approx(ergas(a2, b2)).epsilon(1e-12));
}

TEST_CASE("sam is invariant to per-pixel positive spectral scaling") {
  const HsiCube a = hwtest::random_cube(4, 4, 5, 14, 0.1, 1.0);
  const HsiCube b = hwtest::random_cube(4, 4, 5, 15, 0.1, 1.0);
  HsiCube b_scaled = b;
  hwprox::Rng rng(5);
  for (std::int64_t i = 0; i < 4; ++i)
    for (std::int64_t j = 0; j < 4; ++j) {
      const double s = rng.uniform(0.5, 2.0);
      for (std::int64_t k = 0; k < 5; ++k) b_scaled.at(i, j, k) *= s;
    }
  CHECK(sam(a, b_scaled) == Approx(sam(a, b)).epsilon(1e-7));
}
