// Copyright (c) 2026 The iblkit Authors.
// SPDX-License-Identifier: Apache-2.0

#include "iblkit/prefilter.hpp"

namespace iblkit {

namespace {

// Unnormalized density over pixel offsets for the view-aligned lobe:
// D(h) (h.w) / (4 (wi.h)) * (wi.v) / (f^2 + |s|^2), with w = v = +z.
double kernel_density(double sx, double sy, double a2, double f) {
  const double s2 = sx * sx + sy * sy;
  const double f2 = f * f;
  const double inv_len = 1.0 / std::sqrt(s2 + f2);
  const double wix = sx * inv_len, wiy = sy * inv_len, wiz = f * inv_len;
  double hx = wix, hy = wiy, hz = wiz + 1.0;
  const double hn = std::sqrt(hx * hx + hy * hy + hz * hz);
  hx /= hn;
  hy /= hn;
  hz /= hn;
  const double denom = hz * hz * (a2 - 1.0) + 1.0;
  const double d = a2 / (kPi<double> * denom * denom);
  const double wi_dot_h = wix * hx + wiy * hy + wiz * hz;
  if (wi_dot_h <= 0.0) return 0.0;
  return d * hz / (4.0 * wi_dot_h) * (wiz / (f2 + s2));
}

}  // namespace

ScreenKernel analytic_kernel(double gamma_j, double focal_px, int half_width) {
  if (focal_px <= 0) throw std::invalid_argument("analytic_kernel: focal length must be positive");
  if (half_width < 0) throw std::invalid_argument("analytic_kernel: negative window");
  const double gamma = std::max(kGammaMin, gamma_j);
  const double alpha = gamma * gamma;
  const double a2 = alpha * alpha;

  ScreenKernel k;
  k.half_width = half_width;
  k.focal_px = float(focal_px);
  const int n = 2 * half_width + 1;
  k.weights.resize(n, n);
  double mass = 0.0;
  for (int iy = -half_width; iy <= half_width; ++iy)
    for (int ix = -half_width; ix <= half_width; ++ix) {
      const double p = kernel_density(ix, iy, a2, focal_px);
      k.weights(iy + half_width, ix + half_width) = float(p);
      mass += p;
    }

  const int ref_hw = 3 * half_width + 2;
  double ref_mass = 0.0;
  for (int iy = -ref_hw; iy <= ref_hw; ++iy)
    for (int ix = -ref_hw; ix <= ref_hw; ++ix) ref_mass += kernel_density(ix, iy, a2, focal_px);

  if (mass <= 0.0) throw std::runtime_error("analytic_kernel: zero mass window");
  k.mass_captured = float(mass / ref_mass);
  k.window_warning = k.mass_captured < 0.99f;
  k.weights /= float(mass);
  return k;
}

namespace {

// 1D pass with truncated-renormalized borders along the given axis.
Eigen::ArrayXXf blur_axis(const Eigen::ArrayXXf& in, const Eigen::ArrayXf& taps, bool rows) {
  const int radius = int(taps.size()) / 2;
  Eigen::ArrayXXf out(in.rows(), in.cols());
  const int n = rows ? int(in.rows()) : int(in.cols());
  const int m = rows ? int(in.cols()) : int(in.rows());
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < n; ++i) {
      float acc = 0, wsum = 0;
      const int k0 = std::max(-radius, -i);
      const int k1 = std::min(radius, n - 1 - i);
      for (int k = k0; k <= k1; ++k) {
        const float w = taps(k + radius);
        acc += w * (rows ? in(i + k, j) : in(j, i + k));
        wsum += w;
      }
      (rows ? out(i, j) : out(j, i)) = acc / wsum;
    }
  }
  return out;
}

}  // namespace

Image gaussian_prefilter(const Image& img, int level, const PrefilterSpec& spec) {
  if (level < 0 || level >= spec.levels())
    throw std::invalid_argument("gaussian_prefilter: level out of range");
  if (!img.finite()) throw std::runtime_error("gaussian_prefilter: non-finite pixels");
  const double sigma = spec.sigmas_px(level);
  if (sigma == 0.0) return img;

  const int radius = int(std::ceil(3.0 * sigma));
  Eigen::ArrayXf taps(2 * radius + 1);
  for (int k = -radius; k <= radius; ++k)
    taps(k + radius) = float(std::exp(-0.5 * double(k) * double(k) / (sigma * sigma)));
  taps /= taps.sum();

  Image out = img;
  for (auto& plane : out.planes) {
    plane = blur_axis(plane, taps, /*rows=*/true);
    plane = blur_axis(plane, taps, /*rows=*/false);
  }
  return out;
}

}  // namespace iblkit
