// Copyright (c) 2026 The iblkit Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "iblkit/common.hpp"

namespace iblkit {

// Halfway vector drawn proportional to D(h)(n.h) in the local +z frame,
// cos(theta_h) = sqrt((1 - u1) / (1 + (alpha^2 - 1) u1)), alpha = gamma^2.
template <typename S>
struct GgxSample {
  Vec3<S> h;
  S pdf;  // solid-angle density of h
};

template <typename S>
GgxSample<S> ggx_sample(S u1, S u2, S gamma) {
  const S alpha = gamma * gamma;
  const S a2 = alpha * alpha;
  const S cos_h = std::sqrt(std::max(S(0), (S(1) - u1) / (S(1) + (a2 - S(1)) * u1)));
  const S sin_h = std::sqrt(std::max(S(0), S(1) - cos_h * cos_h));
  const S phi = S(2) * kPi<S> * u2;
  const Vec3<S> h(sin_h * std::cos(phi), sin_h * std::sin(phi), cos_h);
  const S t = cos_h * cos_h * (a2 - S(1)) + S(1);
  const S d = a2 / (kPi<S> * t * t);
  return {h, d * cos_h};
}

// Cosine-weighted hemisphere direction, pdf = cos(theta)/pi.
template <typename S>
Vec3<S> cosine_sample(S u1, S u2) {
  const S r = std::sqrt(u1);
  const S phi = S(2) * kPi<S> * u2;
  const S z = std::sqrt(std::max(S(0), S(1) - u1));
  return Vec3<S>(r * std::cos(phi), r * std::sin(phi), z);
}

}  // namespace iblkit
