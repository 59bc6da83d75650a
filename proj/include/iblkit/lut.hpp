// Copyright (c) 2026 The iblkit Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>

#include "iblkit/common.hpp"

namespace iblkit {

// Split-sum BRDF integration table over (cos_theta, gamma). Entries live at
// cell centers: cos_theta in (0,1], gamma in (gamma_min,1]. Immutable after
// construction, freely shareable across threads.
struct BrdfLut {
  int resolution = 0;
  Eigen::ArrayXXf scale;  // (cos index, gamma index)
  Eigen::ArrayXXf bias;

  float cos_center(int i) const { return (float(i) + 0.5f) / float(resolution); }
  float gamma_center(int j) const {
    return float(kGammaMin) + (float(j) + 0.5f) * (1.0f - float(kGammaMin)) / float(resolution);
  }
};

// GGX-importance-sampled estimate of the (scale, bias) integrals for one
// view/roughness configuration: n = +z, wo in-plane at the given cosine.
std::pair<double, double> lut_cell_estimate(double cos_theta, double gamma, int samples,
                                            std::uint64_t seed);

// Tabulates the full grid; deterministic per seed, parallel over cells with
// one RNG stream per cell.
BrdfLut compute_lut(int resolution, int samples_per_cell, std::uint64_t seed);

// Bilinear fetch between cell centers; queries are clamped to the grid.
template <typename S>
Vec2<S> fetch(const BrdfLut& lut, S cos_theta, S gamma) {
  const int r = lut.resolution;
  const S eps_lo = S(0.5) / S(r);
  const S fc = std::min(S(1) - eps_lo, std::max(eps_lo, cos_theta)) * S(r) - S(0.5);
  const S span = S(1) - S(kGammaMin);
  S g = (gamma - S(kGammaMin)) / span * S(r) - S(0.5);
  g = std::min(S(r - 1), std::max(S(0), g));
  const int i0 = int(fc), j0 = int(g);
  const int i1 = std::min(i0 + 1, r - 1), j1 = std::min(j0 + 1, r - 1);
  const S fx = fc - S(i0), fy = g - S(j0);
  auto at = [&](const Eigen::ArrayXXf& a, int i, int j) { return S(a(i, j)); };
  auto bil = [&](const Eigen::ArrayXXf& a) {
    return (S(1) - fx) * ((S(1) - fy) * at(a, i0, j0) + fy * at(a, i0, j1)) +
           fx * ((S(1) - fy) * at(a, i1, j0) + fy * at(a, i1, j1));
  };
  return Vec2<S>(bil(lut.scale), bil(lut.bias));
}

// Fetch plus the partial derivative of (scale, bias) with respect to gamma,
// for the gradient engine. Zero slope where the query clamps to the grid.
template <typename S>
void fetch_with_grad(const BrdfLut& lut, S cos_theta, S gamma, Vec2<S>& value, Vec2<S>& dgamma) {
  const int r = lut.resolution;
  const S eps_lo = S(0.5) / S(r);
  const S fc = std::min(S(1) - eps_lo, std::max(eps_lo, cos_theta)) * S(r) - S(0.5);
  const S span = S(1) - S(kGammaMin);
  const S g_raw = (gamma - S(kGammaMin)) / span * S(r) - S(0.5);
  const bool clamped = g_raw <= S(0) || g_raw >= S(r - 1);
  const S g = std::min(S(r - 1), std::max(S(0), g_raw));
  const int i0 = int(fc), j0 = std::min(int(g), r - 2 >= 0 ? r - 2 : 0);
  const int i1 = std::min(i0 + 1, r - 1), j1 = std::min(j0 + 1, r - 1);
  const S fx = fc - S(i0), fy = g - S(j0);
  auto bil = [&](const Eigen::ArrayXXf& a, S& val, S& dg) {
    const S lo = (S(1) - fx) * S(a(i0, j0)) + fx * S(a(i1, j0));
    const S hi = (S(1) - fx) * S(a(i0, j1)) + fx * S(a(i1, j1));
    val = (S(1) - fy) * lo + fy * hi;
    dg = clamped ? S(0) : (hi - lo) * S(r) / span;
  };
  bil(lut.scale, value(0), dgamma(0));
  bil(lut.bias, value(1), dgamma(1));
}

// Binary format: magic "IBLLUT1\n", little-endian u32 resolution, u32
// reserved, then resolution^2 (scale, bias) float pairs, cos outer.
void save_lut(const BrdfLut& lut, const std::string& path);
BrdfLut load_lut(const std::string& path);

}  // namespace iblkit
