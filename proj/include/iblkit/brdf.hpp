// Copyright (c) 2026 The iblkit Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "iblkit/common.hpp"

namespace iblkit {

// Per-point surface material. F0 is derived: lerp(0.04, albedo, metallic).
template <typename S>
struct MicrofacetParams {
  Rgb<S> albedo = Rgb<S>::Constant(S(0.5));
  S roughness = S(0.5);
  S metallic = S(0);

  Rgb<S> f0() const { return Rgb<S>::Constant(S(0.04)) + (albedo - S(0.04)) * metallic; }
};

using MicrofacetParamsF = MicrofacetParams<float>;
using MicrofacetParamsD = MicrofacetParams<double>;

// Local shading frame: all vectors unit length, h = normalize(wo + wi).
// Construction throws on non-unit inputs or the degenerate wo == -wi case.
template <typename S>
struct ShadingGeometry {
  Vec3<S> n, wo, wi, h;

  static ShadingGeometry make(const Vec3<S>& n, const Vec3<S>& wo, const Vec3<S>& wi) {
    constexpr S tol = S(1e-5);
    if (std::abs(n.norm() - S(1)) > tol || std::abs(wo.norm() - S(1)) > tol ||
        std::abs(wi.norm() - S(1)) > tol)
      throw std::invalid_argument("ShadingGeometry: vectors must be unit length");
    Vec3<S> sum = wo + wi;
    const S len = sum.norm();
    if (len < S(1e-6))
      throw std::invalid_argument("ShadingGeometry: halfway vector undefined (wo == -wi)");
    return ShadingGeometry{n, wo, wi, sum / len};
  }
};

// Trowbridge-Reitz GGX normal distribution, alpha = gamma^2.
template <typename S>
S ggx_d(S n_dot_h, S gamma) {
  if (gamma <= S(0))
    throw std::domain_error("ggx_d: mirror roughness; clamp before calling");
  const S alpha = gamma * gamma;
  const S a2 = alpha * alpha;
  const S t = n_dot_h * n_dot_h * (a2 - S(1)) + S(1);
  return a2 / (kPi<S> * t * t);
}

// Schlick approximation of the Fresnel reflectance at angle acos(cos_theta).
// Out-of-range inputs are clamped (grazing numerical noise) and counted.
template <typename S, typename Derived>
Rgb<S> fresnel_schlick(S cos_theta, const Eigen::ArrayBase<Derived>& f0_in) {
  const Rgb<S> f0 = f0_in;
  if (cos_theta < S(0) || cos_theta > S(1)) {
    diag::fresnel_clamps.fetch_add(1, std::memory_order_relaxed);
    cos_theta = clamp01(cos_theta);
  }
  const S c = S(1) - cos_theta;
  const S c2 = c * c;
  return f0 + (S(1) - f0) * (c2 * c2 * c);
}

// Roughness-injected Fresnel used by the diffuse term: the grazing boost is
// capped at max(1 - gamma, F0) so rough surfaces do not over-reflect at edges.
template <typename S, typename Derived>
Rgb<S> fresnel_gamma(S n_dot_wo, const Eigen::ArrayBase<Derived>& f0_in, S gamma) {
  const Rgb<S> f0 = f0_in;
  const S c = S(1) - clamp01(n_dot_wo);
  const S c2 = c * c;
  const S w = c2 * c2 * c;
  const Rgb<S> cap = f0.max(Rgb<S>::Constant(S(1) - clamp01(gamma)));
  return f0 + (cap - f0) * w;
}

// Smith geometry term, product of two Schlick-GGX factors with k = alpha/2.
template <typename S>
S smith_g(S n_dot_wi, S n_dot_wo, S gamma) {
  if (n_dot_wi <= S(0) || n_dot_wo <= S(0))
    throw std::domain_error("smith_g: backfacing geometry");
  const S alpha = gamma * gamma;
  const S k = alpha / S(2);
  auto g1 = [k](S c) { return c / (c * (S(1) - k) + k); };
  return g1(n_dot_wi) * g1(n_dot_wo);
}

// Cook-Torrance specular BRDF: D * F * G / (4 (n.wo)(n.wi)).
template <typename S>
Rgb<S> specular_brdf(const ShadingGeometry<S>& geom, const MicrofacetParams<S>& params) {
  const S gamma = std::max(S(kGammaMin), std::min(S(1), params.roughness));
  const S n_dot_wo = geom.n.dot(geom.wo);
  const S n_dot_wi = geom.n.dot(geom.wi);
  const S n_dot_h = geom.n.dot(geom.h);
  const S wo_dot_h = geom.wo.dot(geom.h);
  const S d = ggx_d(n_dot_h, gamma);
  const Rgb<S> f = fresnel_schlick(wo_dot_h, params.f0());
  const S g = smith_g(n_dot_wi, n_dot_wo, gamma);
  return f * (d * g / (S(4) * n_dot_wo * n_dot_wi));
}

// Diffuse term of the approximated radiance: gamma * (1 - F_gamma) * a * I.
// The attenuation uses roughness rather than (1 - metallic).
template <typename S, typename Derived>
Rgb<S> diffuse_radiance(const MicrofacetParams<S>& params, S n_dot_wo,
                        const Eigen::ArrayBase<Derived>& irradiance) {
  const Rgb<S> fg = fresnel_gamma(n_dot_wo, params.f0(), params.roughness);
  return params.roughness * (S(1) - fg) * params.albedo * irradiance.derived();
}

}  // namespace iblkit
