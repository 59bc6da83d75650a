// Copyright (c) 2026 The iblkit Authors.
// SPDX-License-Identifier: Apache-2.0

#include "oracles.hpp"

#include <cmath>
#include <stdexcept>

namespace iblkit::oracles {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

std::pair<double, double> lut_integral(double cos_theta, double gamma, int n_theta, int n_phi) {
  const double alpha = gamma * gamma;
  const double a2 = alpha * alpha;
  const double k = alpha / 2.0;
  const double sin_v = std::sqrt(std::max(0.0, 1.0 - cos_theta * cos_theta));
  const double vx = sin_v, vz = cos_theta;

  auto g1 = [k](double c) { return c / (c * (1.0 - k) + k); };

  double scale = 0.0, bias = 0.0;
  const double du = 1.0 / n_theta;
  const double dphi = kPi / n_phi;
  for (int it = 0; it < n_theta; ++it) {
    const double u = (it + 0.5) * du;
    const double u3 = u * u * u;
    const double theta_h = 0.5 * kPi * u3 * u;      // theta = pi/2 * u^4
    const double jac = 0.5 * kPi * 4.0 * u3 * du;   // dtheta/du * du
    const double ch = std::cos(theta_h);
    const double sh = std::sin(theta_h);
    const double denom = ch * ch * (a2 - 1.0) + 1.0;
    const double d = a2 / (kPi * denom * denom);
    const double row_weight = d * sh * jac;
    if (row_weight == 0.0) continue;
    double row_scale = 0.0, row_bias = 0.0;
    for (int ip = 0; ip < n_phi; ++ip) {
      const double phi = (ip + 0.5) * dphi;
      const double hx = sh * std::cos(phi);
      const double hy = sh * std::sin(phi);
      const double hz = ch;
      const double v_dot_h = vx * hx + vz * hz;
      if (v_dot_h <= 0.0) continue;
      // wi = reflect(v about h)
      const double wiz = 2.0 * v_dot_h * hz - vz;
      if (wiz <= 0.0) continue;
      const double g = g1(wiz) * g1(vz);
      const double common = g * v_dot_h / vz;
      const double fc0 = 1.0 - v_dot_h;
      const double fc2 = fc0 * fc0;
      const double fc = fc2 * fc2 * fc0;
      row_scale += (1.0 - fc) * common;
      row_bias += fc * common;
    }
    scale += row_weight * row_scale;
    bias += row_weight * row_bias;
  }
  // phi covered [0, pi]; mirror symmetry doubles it.
  scale *= 2.0 * dphi;
  bias *= 2.0 * dphi;
  return {scale, bias};
}

double constant_sigma_depth(double sigma, double t_end, int intervals) {
  double sum = 0.0;
  const double dt = t_end / intervals;
  for (int i = 0; i < intervals; ++i) {
    const double t = (i + 0.5) * dt;
    sum += t * sigma * std::exp(-sigma * t) * dt;
  }
  return sum;
}

double constant_sigma_transmittance(double sigma, double t_end) {
  return std::exp(-sigma * t_end);
}

double kernel_second_moment(double gamma, double focal_px, double window_px, double step_px) {
  const double alpha = gamma * gamma;
  const double a2 = alpha * alpha;
  const double f2 = focal_px * focal_px;
  double mass = 0.0, m2 = 0.0;
  const int n = int(window_px / step_px);
  for (int iy = -n; iy <= n; ++iy) {
    for (int ix = -n; ix <= n; ++ix) {
      const double sx = ix * step_px;
      const double sy = iy * step_px;
      const double s2 = sx * sx + sy * sy;
      const double inv_len = 1.0 / std::sqrt(s2 + f2);
      const double wix = sx * inv_len, wiy = sy * inv_len, wiz = focal_px * inv_len;
      // omega = v = +z; h = normalize(omega + wi)
      double hx = wix, hy = wiy, hz = wiz + 1.0;
      const double hn = std::sqrt(hx * hx + hy * hy + hz * hz);
      hx /= hn;
      hy /= hn;
      hz /= hn;
      const double denom = hz * hz * (a2 - 1.0) + 1.0;
      const double d = a2 / (kPi * denom * denom);
      const double wi_dot_h = wix * hx + wiy * hy + wiz * hz;
      if (wi_dot_h <= 0.0) continue;
      const double p = d * hz / (4.0 * wi_dot_h) * (wiz / (f2 + s2));
      mass += p;
      m2 += p * s2;
    }
  }
  if (mass <= 0.0) throw std::runtime_error("kernel_second_moment: zero mass");
  return m2 / mass;
}

double gamma_q(double a, double x) {
  if (a <= 0.0 || x < 0.0) throw std::invalid_argument("gamma_q: bad arguments");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) {
    // Lower series: P(a,x), then Q = 1 - P.
    double ap = a, sum = 1.0 / a, del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-15) break;
    }
    const double p = sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    return 1.0 - p;
  }
  // Continued fraction for Q(a,x) (Lentz).
  double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -double(i) * (double(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace iblkit::oracles
