// Copyright (c) 2026 The iblkit Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "iblkit/common.hpp"
#include "iblkit/image.hpp"

namespace iblkit {

// Roughness levels and their Gaussian stds (in pixels at training
// resolution). Level 0 is the unfiltered image. d0 is the reference distance
// for the depth-adaptive roughness, the mean of the near and far plane.
struct PrefilterSpec {
  Eigen::ArrayXd gammas;
  Eigen::ArrayXd sigmas_px;
  double d0 = 1.0;

  int levels() const { return int(gammas.size()); }

  static PrefilterSpec defaults(double d0 = 1.0) {
    PrefilterSpec s;
    s.gammas = Eigen::ArrayXd(4);
    s.gammas << 0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0;
    s.sigmas_px = Eigen::ArrayXd(4);
    s.sigmas_px << 0.0, 2.0, 8.0, 32.0;
    s.d0 = d0;
    return s;
  }

  void validate() const {
    if (gammas.size() < 2 || gammas.size() != sigmas_px.size())
      throw std::invalid_argument("PrefilterSpec: need matching gamma/sigma lists");
    if (gammas(0) != 0.0 || gammas(gammas.size() - 1) != 1.0)
      throw std::invalid_argument("PrefilterSpec: gamma levels must span [0, 1]");
    for (int j = 1; j < gammas.size(); ++j)
      if (gammas(j) <= gammas(j - 1))
        throw std::invalid_argument("PrefilterSpec: gamma levels must be strictly increasing");
    if (sigmas_px(0) != 0.0)
      throw std::invalid_argument("PrefilterSpec: level 0 must be unfiltered");
  }
};

// Screen-space sampling density of a view-aligned reflection lobe, tabulated
// over a (2*half_width+1)^2 pixel window and normalized to sum 1.
struct ScreenKernel {
  int half_width = 0;
  float focal_px = 0;
  Eigen::ArrayXXf weights;
  float mass_captured = 1;   // window mass relative to a 3x reference window
  bool window_warning = false;  // set when mass_captured < 0.99
};

ScreenKernel analytic_kernel(double gamma_j, double focal_px, int half_width);

// Separable Gaussian blur with the level's sigma; borders use truncated,
// renormalized kernels. Level 0 returns the input unchanged.
Image gaussian_prefilter(const Image& img, int level, const PrefilterSpec& spec);

// Hat-function interpolation weights over the gamma grid: at most two
// adjacent nonzero entries, sum 1. Optionally returns d(weights)/d(gamma).
template <typename S>
Eigen::Array<S, Eigen::Dynamic, 1> interp_weights(S gamma, const PrefilterSpec& spec,
                                                  Eigen::Array<S, Eigen::Dynamic, 1>* dw = nullptr) {
  const int n = spec.levels();
  Eigen::Array<S, Eigen::Dynamic, 1> w = Eigen::Array<S, Eigen::Dynamic, 1>::Zero(n);
  if (dw) *dw = Eigen::Array<S, Eigen::Dynamic, 1>::Zero(n);
  const S lo = S(spec.gammas(0)), hi = S(spec.gammas(n - 1));
  const S g = std::min(hi, std::max(lo, gamma));
  int j = 0;
  while (j + 2 < n && g > S(spec.gammas(j + 1))) ++j;
  const S g0 = S(spec.gammas(j)), g1 = S(spec.gammas(j + 1));
  const S t = (g - g0) / (g1 - g0);
  w(j) = S(1) - t;
  w(j + 1) = t;
  if (dw && gamma > lo && gamma < hi) {
    (*dw)(j) = S(-1) / (g1 - g0);
    (*dw)(j + 1) = S(1) / (g1 - g0);
  }
  return w;
}

// Depth-adaptive roughness: gamma_ref = (d / d0) * gamma, clamped to [0, 1].
template <typename S>
S normalize_roughness(S gamma, S distance, const PrefilterSpec& spec) {
  if (distance <= S(0))
    throw std::domain_error("normalize_roughness: reflected ray escaped the volume");
  return clamp01(gamma * distance / S(spec.d0));
}

}  // namespace iblkit
