// Copyright (c) 2026 The iblkit Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "iblkit/lut.hpp"
#include "oracles.hpp"

using namespace iblkit;

namespace {
std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}
}  // namespace

TEST_CASE("lut cell estimate matches frozen quadrature golden at (0.5, 0.5)") {
  // Golden computed with oracles::lut_integral on a 2048x512 (2^20 node) grid.
  const double golden_scale = 0.7285345;
  const double golden_bias = 0.0185464;
  const auto [s, b] = lut_cell_estimate(0.5, 0.5, 1 << 16, 1234);
  CHECK(std::abs(s - golden_scale) < 5e-3);
  CHECK(std::abs(b - golden_bias) < 5e-3);
}

TEST_CASE("lut oracle equivalence on random cells") {
  Prng rng(99);
  for (int it = 0; it < 20; ++it) {
    const double c = 0.05 + 0.95 * rng.next_double();
    const double g = kGammaMin + (1.0 - kGammaMin) * rng.next_double();
    const auto [s, b] = lut_cell_estimate(c, g, 1 << 16, hash_combine(7, it));
    const auto [qs, qb] = oracles::lut_integral(c, g, 1024, 256);
    CHECK(std::abs(s - qs) < 5e-3);
    CHECK(std::abs(b - qb) < 5e-3);
  }
}

TEST_CASE("near-mirror head-on cell is (1, 0)") {
  const auto [s, b] = lut_cell_estimate(1.0 - 1e-4, kGammaMin + 1e-4, 1 << 14, 5);
  CHECK(std::abs(s - 1.0) < 0.01);
  CHECK(std::abs(b) < 0.01);
}

TEST_CASE("compute_lut deterministic per seed") {
  const BrdfLut a = compute_lut(16, 1 << 10, 42);
  const BrdfLut b = compute_lut(16, 1 << 10, 42);
  CHECK((a.scale == b.scale).all());
  CHECK((a.bias == b.bias).all());
  const BrdfLut c = compute_lut(16, 1 << 10, 43);
  CHECK(!(a.scale == c.scale).all());
}

TEST_CASE("lut entries bounded and energy conserving") {
  const BrdfLut lut = compute_lut(16, 1 << 14, 11);
  CHECK(lut.scale.minCoeff() >= 0.0f);
  CHECK(lut.bias.minCoeff() >= 0.0f);
  CHECK(lut.scale.maxCoeff() <= 1.0f);
  CHECK(lut.bias.maxCoeff() <= 1.0f);
  CHECK((lut.scale + lut.bias).maxCoeff() <= 1.0f + 1e-3f);
}

TEST_CASE("lut bias monotone as cos decreases at fixed gamma") {
  // Below cos ~0.06 the view shadowing factor dominates the grazing Fresnel
  // boost and bias turns over; the check covers the rest of the grid.
  const BrdfLut lut = compute_lut(32, 1 << 14, 21);
  for (int j = 0; j < lut.resolution; ++j)
    for (int i = 1; i < lut.resolution; ++i)
      if (lut.cos_center(i - 1) >= 0.06f)
        CHECK(lut.bias(i - 1, j) >= lut.bias(i, j) - 1e-3f);
}

TEST_CASE("fetch interpolation identities") {
  const BrdfLut lut = compute_lut(16, 1 << 10, 3);
  // Exact at a cell center.
  const auto v = fetch(lut, double(lut.cos_center(5)), double(lut.gamma_center(9)));
  CHECK(v(0) == doctest::Approx(double(lut.scale(5, 9))).epsilon(1e-6));
  CHECK(v(1) == doctest::Approx(double(lut.bias(5, 9))).epsilon(1e-6));
  // Midpoint along the cos axis averages the two neighbors.
  const double mid = 0.5 * (lut.cos_center(5) + lut.cos_center(6));
  const auto m = fetch(lut, mid, double(lut.gamma_center(9)));
  CHECK(m(0) == doctest::Approx(0.5 * (lut.scale(5, 9) + lut.scale(6, 9))).epsilon(1e-6));
  CHECK(m(1) == doctest::Approx(0.5 * (lut.bias(5, 9) + lut.bias(6, 9))).epsilon(1e-6));
  // Clamped fetches stay inside the grid.
  const auto lo = fetch(lut, -1.0, 0.0);
  CHECK(lo(0) == doctest::Approx(double(lut.scale(0, 0))).epsilon(1e-6));
}

TEST_CASE("fetch near head-on mirror has tiny bias") {
  const BrdfLut lut = compute_lut(32, 1 << 14, 77);
  const auto v = fetch(lut, 1.0 - 1e-6, kGammaMin);
  CHECK(v(1) < 0.01);
}

TEST_CASE("lut save/load roundtrip and error paths") {
  const BrdfLut lut = compute_lut(8, 1 << 8, 123);
  const std::string path = temp_path("iblkit_test.lut");
  save_lut(lut, path);
  const BrdfLut back = load_lut(path);
  CHECK(back.resolution == lut.resolution);
  CHECK((back.scale == lut.scale).all());
  CHECK((back.bias == lut.bias).all());

  SUBCASE("truncated payload") {
    std::ifstream is(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(is)), {});
    is.close();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write(bytes.data(), std::streamsize(bytes.size() - 5));
    os.close();
    CHECK_THROWS_WITH_AS(load_lut(path), "unexpected end of LUT payload", std::runtime_error);
  }

  SUBCASE("non-finite entry") {
    save_lut(lut, path);
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(16);  // first payload float
    const std::uint32_t nan_bits = 0x7FC00000u;
    f.write(reinterpret_cast<const char*>(&nan_bits), 4);
    f.close();
    CHECK_THROWS_WITH_AS(load_lut(path), "load_lut: non-finite LUT entry", std::runtime_error);
  }

  SUBCASE("bad magic") {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write("IBLLUT9\n\0\0\0\0", 12);
    os.close();
    CHECK_THROWS_AS(load_lut(path), std::runtime_error);
  }
  std::filesystem::remove(path);
}
