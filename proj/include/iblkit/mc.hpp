// Copyright (c) 2026 The iblkit Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "iblkit/brdf.hpp"
#include "iblkit/camera.hpp"
#include "iblkit/image.hpp"
#include "iblkit/sampling.hpp"

namespace iblkit {

// ---------------------------------------------------------------------------
// Hemisphere sampling

struct HemisphereSampleSet {
  Eigen::Matrix3Xd dirs;  // unit vectors, local +z frame
  Eigen::VectorXd pdf;    // constant 1/(2 pi)
};

// Jittered equal-area strata: ceil(sqrt(N)) z-bands, floor(N/rows) phi strata
// per band with the remainder merged into the last band. Band heights are
// chosen so every stratum covers the same solid angle, hence pdf = 1/(2 pi).
HemisphereSampleSet equal_area_stratified(int n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Reference estimators (Monte Carlo oracles)

using RadianceFn = std::function<Rgbd(const Vec3d& pos, const Vec3d& dir)>;

struct McEstimate {
  Rgbd value = Rgbd::Zero();
  Rgbd std_error = Rgbd::Zero();
};

// GGX-importance-sampled estimate of the specular part of the rendering
// equation at a surface point. Deterministic per seed.
McEstimate mc_specular(const RadianceFn& radiance, const Vec3d& pos, const Vec3d& wo,
                       const Vec3d& normal, const MicrofacetParamsD& params, int n,
                       std::uint64_t seed);

// Cosine-integrated incoming radiance with the 1/pi convention: constant
// incoming radiance L yields exactly L.
McEstimate mc_irradiance(const RadianceFn& radiance, const Vec3d& pos, const Vec3d& normal, int n,
                         std::uint64_t seed);

// ---------------------------------------------------------------------------
// Analytic scenes and the reference renderer

struct Primitive {
  enum class Kind { Sphere, Box, Rect };
  Kind kind = Kind::Sphere;
  Vec3d center = Vec3d::Zero();
  double radius = 0;            // sphere
  Vec3d extent = Vec3d::Zero();  // box half extents; rect has one zero axis
  MicrofacetParamsD material;
  Rgbd emission = Rgbd::Zero();

  bool emissive() const { return (emission > 0.0).any(); }
  double rect_area() const;
};

struct AnalyticScene {
  std::vector<Primitive> prims;
  Vec3d bounds_min = Vec3d::Constant(-1);
  Vec3d bounds_max = Vec3d::Constant(1);
  Rgbd background = Rgbd::Zero();

  void validate() const;
};

struct SceneHit {
  double t = 0;
  Vec3d pos = Vec3d::Zero();
  Vec3d normal = Vec3d::Zero();  // geometric, unit
  int prim = -1;
};

std::optional<SceneHit> intersect(const AnalyticScene& scene, const Vec3d& origin,
                                  const Vec3d& dir, double t_min, double t_max);

// Incoming radiance along (origin, dir) under the reference lighting model:
// emitters and background directly, surfaces shaded with next-event direct
// lighting plus `bounces` levels of sampled indirect transport.
Rgbd trace_radiance(const AnalyticScene& scene, const Vec3d& origin, const Vec3d& dir,
                    double t_max, int bounces, Prng& rng, bool include_emitters,
                    int n_cos, int n_ggx);

struct RefFrame {
  Image beauty;      // rgb
  Image albedo;      // rgb
  Image roughness;   // gray
  Image normal;      // rgb, world-space components
  Image depth;       // gray
  Image irradiance;  // gray (monochrome mean)
};

struct RenderRefOptions {
  int spp = 8;
  int n_cos = 4;   // cosine-sampled indirect directions per camera sample
  int n_ggx = 4;   // GGX-sampled indirect directions per camera sample
  int n_irr = 4;   // cosine samples for the irradiance buffer
};

// Direct lighting plus exactly one indirect bounce, with ground-truth AOV
// buffers for every intrinsic component. Bitwise deterministic per seed.
RefFrame render_reference(const AnalyticScene& scene, const Camera& camera, int spp,
                          std::uint64_t seed, const RenderRefOptions& opts = {});

// Built-in scenes: "box" (lit room with three objects) and "floor" (Lambertian
// plane under a uniform sky).
AnalyticScene builtin_scene(const std::string& name);

// Structured-text scene description (JSON field names: type, center,
// radius/extent, albedo, roughness, metallic, emission).
AnalyticScene load_scene(const std::string& path);

}  // namespace iblkit
