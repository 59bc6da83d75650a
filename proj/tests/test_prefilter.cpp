// Copyright (c) 2026 The iblkit Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "iblkit/prefilter.hpp"
#include "oracles.hpp"

using namespace iblkit;

TEST_CASE("analytic kernel matches frozen second-moment golden") {
  // Golden from oracles::kernel_second_moment(0.5, 128, window 96, step 1/8).
  const double golden_m2 = 3248.9;
  ScreenKernel k = analytic_kernel(0.5, 128.0, 96);
  double m2 = 0;
  const int hw = k.half_width;
  for (int iy = -hw; iy <= hw; ++iy)
    for (int ix = -hw; ix <= hw; ++ix)
      m2 += double(k.weights(iy + hw, ix + hw)) * (ix * ix + iy * iy);
  CHECK(std::abs(m2 - golden_m2) / golden_m2 < 0.02);

  // Least-squares Gaussian fit residual below 10% of the kernel peak.
  const double peak = k.weights.maxCoeff();
  double best_res = 1e30;
  for (double sig = 8.0; sig < 90.0; sig *= 1.05) {
    double num = 0, den = 0;
    for (int iy = -hw; iy <= hw; ++iy)
      for (int ix = -hw; ix <= hw; ++ix) {
        const double g = std::exp(-0.5 * (ix * ix + iy * iy) / (sig * sig));
        num += g * k.weights(iy + hw, ix + hw);
        den += g * g;
      }
    const double amp = num / den;
    double res = 0;
    for (int iy = -hw; iy <= hw; ++iy)
      for (int ix = -hw; ix <= hw; ++ix) {
        const double g = amp * std::exp(-0.5 * (ix * ix + iy * iy) / (sig * sig));
        res = std::max(res, std::abs(g - k.weights(iy + hw, ix + hw)));
      }
    best_res = std::min(best_res, res);
  }
  CHECK(best_res / peak < 0.10);
}

TEST_CASE("analytic kernel basics") {
  ScreenKernel k = analytic_kernel(kGammaMin, 128.0, 4);
  CHECK(k.weights(4, 4) >= 0.99f);  // near-delta lobe in the center pixel
  CHECK(double(k.weights.sum()) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK_FALSE(k.window_warning);

  // Variance strictly increasing in gamma; warnings appear once the lobe
  // outgrows the window.
  double prev = -1;
  for (double g : {0.1, 1.0 / 3.0, 2.0 / 3.0, 1.0}) {
    ScreenKernel kk = analytic_kernel(g, 128.0, 96);
    CHECK(double(kk.weights.sum()) == doctest::Approx(1.0).epsilon(1e-6));
    double v = 0;
    for (int iy = -96; iy <= 96; ++iy)
      for (int ix = -96; ix <= 96; ++ix)
        v += double(kk.weights(iy + 96, ix + 96)) * (ix * ix + iy * iy);
    CHECK(v > prev);
    prev = v;
  }
  CHECK(analytic_kernel(1.0, 128.0, 32).window_warning);
}

TEST_CASE("gaussian_prefilter level 0 is the identity") {
  const PrefilterSpec spec = PrefilterSpec::defaults();
  Image img = Image::zeros(17, 13, 3);
  Prng rng(5);
  for (auto& p : img.planes) p = Eigen::ArrayXXf::NullaryExpr(13, 17, [&] { return rng.next_float(); });
  const Image out = gaussian_prefilter(img, 0, spec);
  for (int c = 0; c < 3; ++c) CHECK((out.planes[c] == img.planes[c]).all());
}

TEST_CASE("gaussian_prefilter keeps constants exactly") {
  const PrefilterSpec spec = PrefilterSpec::defaults();
  for (int level : {1, 2, 3}) {
    Image img = Image::zeros(24, 16, 1);
    img.planes[0].setConstant(0.37f);
    const Image out = gaussian_prefilter(img, level, spec);
    CHECK((out.planes[0] - 0.37f).abs().maxCoeff() < 1e-6f);
  }
}

TEST_CASE("gaussian_prefilter impulse response center weight") {
  const PrefilterSpec spec = PrefilterSpec::defaults();
  const int n = 65;
  Image img = Image::zeros(n, n, 1);
  img.planes[0](n / 2, n / 2) = 1.0f;
  const Image out = gaussian_prefilter(img, 1, spec);
  // Separable sampled-Gaussian taps, sigma = 2: center = (g(0)/sum g)^2.
  const double sigma = spec.sigmas_px(1);
  const int radius = int(std::ceil(3.0 * sigma));
  double sum = 0;
  for (int k = -radius; k <= radius; ++k) sum += std::exp(-0.5 * k * k / (sigma * sigma));
  const double expected = 1.0 / (sum * sum);
  CHECK(double(out.planes[0](n / 2, n / 2)) == doctest::Approx(expected).epsilon(1e-4));
}

TEST_CASE("gaussian_prefilter preserves mean of interior-dominated images") {
  const PrefilterSpec spec = PrefilterSpec::defaults();
  Image img = Image::zeros(96, 96, 1);
  Prng rng(17);
  // Smooth-ish random field concentrated away from borders.
  for (int y = 0; y < 96; ++y)
    for (int x = 0; x < 96; ++x)
      img.planes[0](y, x) = 0.5f + 0.4f * std::sin(0.3f * x) * std::cos(0.2f * y);
  for (int level : {1, 2}) {
    const Image out = gaussian_prefilter(img, level, spec);
    CHECK(std::abs(double(out.planes[0].mean()) - double(img.planes[0].mean())) < 1e-3);
  }
}

TEST_CASE("gaussian_prefilter rejects non-finite input") {
  const PrefilterSpec spec = PrefilterSpec::defaults();
  Image img = Image::zeros(8, 8, 1);
  img.planes[0](3, 3) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(gaussian_prefilter(img, 1, spec), std::runtime_error);
}

TEST_CASE("interp_weights hat function") {
  const PrefilterSpec spec = PrefilterSpec::defaults();
  auto w = interp_weights(2.0 / 3.0, spec);
  CHECK(w(2) == doctest::Approx(1.0));
  CHECK(w(0) == doctest::Approx(0.0));
  CHECK(w(1) == doctest::Approx(0.0));
  CHECK(w(3) == doctest::Approx(0.0));

  w = interp_weights(1.0 / 6.0, spec);
  CHECK(w(0) == doctest::Approx(0.5));
  CHECK(w(1) == doctest::Approx(0.5));

  w = interp_weights(1.4, spec);  // clamped above the last level
  CHECK(w(3) == doctest::Approx(1.0));

  Prng rng(31);
  for (int it = 0; it < 1000; ++it) {
    const double g = rng.next_double();
    const auto ww = interp_weights(g, spec);
    CHECK(ww.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ww.minCoeff() >= 0.0);
    CHECK(ww.maxCoeff() <= 1.0);
    CHECK((ww > 0.0).count() <= 2);
  }
}

TEST_CASE("normalize_roughness depth scaling") {
  const PrefilterSpec spec = PrefilterSpec::defaults(2.0);
  CHECK(normalize_roughness(0.37, 2.0, spec) == doctest::Approx(0.37));
  CHECK(normalize_roughness(0.2, 4.0, spec) == doctest::Approx(0.4));
  CHECK(normalize_roughness(0.8, 8.0, spec) == doctest::Approx(1.0));  // clamped
  CHECK_THROWS_AS(normalize_roughness(0.5, -1.0, spec), std::domain_error);
  CHECK_THROWS_AS(normalize_roughness(0.5, 0.0, spec), std::domain_error);
}

TEST_CASE("prefilter spec validation") {
  PrefilterSpec s = PrefilterSpec::defaults();
  CHECK_NOTHROW(s.validate());
  s.gammas(0) = 0.1;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}
