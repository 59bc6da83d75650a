// Copyright (c) 2026 The iblkit Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdio>
#include <optional>

#include "iblkit/brdf.hpp"
#include "iblkit/camera.hpp"
#include "iblkit/field.hpp"
#include "iblkit/image.hpp"
#include "iblkit/lut.hpp"
#include "iblkit/mc.hpp"
#include "iblkit/prefilter.hpp"
#include "iblkit/sampling.hpp"

namespace iblkit {

struct ShadeOptions {
  bool metallic_from_roughness = true;  // F0 uses m = 1 - gamma
  bool depth_normalize = true;          // gamma_ref = (d/d0) gamma for level fetch
  Rgbf background = Rgbf::Zero();
  float hit_threshold = 0.5f;           // weight sum deciding surface vs background
};

struct RenderOptions {
  int n_primary = 64;    // N_s
  int n_secondary = 64;  // N_r
  std::uint64_t seed = 0;
  double normal_step = 1e-2;
  bool want_primary_levels = false;  // volume-render the level heads per pixel
};

// Per-pixel intrinsic bundle, everything shade_pixel needs.
template <typename S>
struct PixelBuffers {
  Rgb<S> albedo = Rgb<S>::Zero();
  S irr = S(0);
  S rough = S(0);
  Vec3<S> normal = Vec3<S>::UnitZ();
  S depth = S(0);
  S t_far_trans = S(1);
  S weight_sum = S(0);
  std::vector<Rgb<S>> levels;  // prefiltered radiance along the reflected ray
  S d_reflect = S(0);
  bool escaped = true;
  bool hit = false;
  bool normal_degenerate = false;
  Vec3<S> dir = -Vec3<S>::UnitZ();  // ray direction (-omega_o)
};

// Final radiance: diffuse gamma (1-F_gamma) a I plus the split-sum specular
// from the interpolated prefiltered levels and the LUT.
template <typename S>
Rgb<S> shade_pixel(const PixelBuffers<S>& px, const BrdfLut& lut, const PrefilterSpec& spec,
                   const ShadeOptions& opts) {
  if (!px.hit) return px.t_far_trans * opts.background.template cast<S>();
  const Vec3<S> wo = -px.dir;
  const S mu = clamp01(S(px.normal.dot(wo)));
  const S gamma = clamp01(px.rough);
  const S metallic = opts.metallic_from_roughness ? S(1) - gamma : S(0);
  const Rgb<S> f0 = Rgb<S>::Constant(S(0.04)) + (px.albedo - S(0.04)) * metallic;

  const Rgb<S> fg = fresnel_gamma(mu, f0, gamma);
  const Rgb<S> diffuse = gamma * (S(1) - fg) * px.albedo * px.irr;

  S gamma_ref = gamma;
  if (opts.depth_normalize && !px.escaped && px.d_reflect > S(0))
    gamma_ref = normalize_roughness(gamma, px.d_reflect, spec);
  const auto w = interp_weights<S>(gamma_ref, spec);
  Rgb<S> pref = Rgb<S>::Zero();
  for (int j = 0; j < int(px.levels.size()); ++j) pref += S(w(j)) * px.levels[size_t(j)];

  const Vec2<S> sb = fetch<S>(lut, mu, gamma);
  const Rgb<S> spec_term = pref * (f0 * sb(0) + sb(1));
  return diffuse + spec_term;
}

// ---------------------------------------------------------------------------
// Full-frame rendering

template <typename S>
struct ViewFrame {
  Camera camera;
  ShadeOptions shade_opts;
  std::vector<PixelBuffers<S>> pixels;  // row-major, y * width + x
  Image beauty, albedo, roughness, irradiance, normal, depth;
  std::vector<Image> primary_levels;

  const PixelBuffers<S>& at(int y, int x) const {
    return pixels[size_t(y) * camera.width + x];
  }
};

template <typename S, class Field>
ViewFrame<S> render_view(const Field& field, const Camera& camera, const BrdfLut& lut,
                         const PrefilterSpec& spec, const ShadeOptions& shade_opts,
                         const RenderOptions& opts) {
  const int w = camera.width, h = camera.height;
  ViewFrame<S> frame;
  frame.camera = camera;
  frame.shade_opts = shade_opts;
  frame.pixels.resize(size_t(w) * h);
  frame.beauty = Image::zeros(w, h, 3);
  frame.albedo = Image::zeros(w, h, 3);
  frame.roughness = Image::zeros(w, h, 1);
  frame.irradiance = Image::zeros(w, h, 1);
  frame.normal = Image::zeros(w, h, 3);
  frame.depth = Image::zeros(w, h, 1);
  const int levels = field.level_count();
  if (opts.want_primary_levels)
    frame.primary_levels.assign(size_t(levels), Image::zeros(w, h, 3));

  parallel_for(std::int64_t(w) * h, [&](std::int64_t pix) {
    const int x = int(pix % w), y = int(pix / w);
    PixelBuffers<S>& px = frame.pixels[size_t(pix)];
    Prng rng(opts.seed, std::uint64_t(pix));
    const Vec3<S> origin = camera.position().cast<S>();
    const Vec3<S> dir = camera.pixel_direction(x, y).cast<S>();
    px.dir = dir;

    const VecX<S> jitter = uniform_jitter<S>(opts.n_primary, rng);
    Mat3X<S> xs(3, opts.n_primary);
    const RaySamples<S> samples =
        stratified_samples<S>(S(camera.t_near), S(camera.t_far), opts.n_primary, jitter);
    for (int i = 0; i < opts.n_primary; ++i) xs.col(i) = origin + samples.t(i) * dir;
    PointBatch<S> pb;
    field.eval_points(xs, pb);
    LevelsBatch<S> prim_levels;
    if (opts.want_primary_levels) field.eval_levels(pb.feature, dir, prim_levels);
    const RayOutputs<S> out = volume_accumulate<S>(
        samples, pb, opts.want_primary_levels ? &prim_levels : nullptr);

    px.albedo = out.albedo;
    px.irr = out.irr;
    px.rough = out.rough;
    px.depth = out.depth;
    px.t_far_trans = out.t_far_trans;
    px.weight_sum = out.weight_sum;
    px.hit = out.weight_sum >= S(shade_opts.hit_threshold);
    px.levels.assign(size_t(levels), Rgb<S>::Zero());

    if (px.hit) {
      const auto nres =
          surface_normal<S>(field, origin, dir, S(camera.t_near), S(camera.t_far),
                            opts.n_primary, jitter, S(opts.normal_step));
      px.normal = nres.normal;
      px.normal_degenerate = nres.degenerate;
      const Vec3<S> wo = -dir;
      const Vec3<S> omega_r = reflect<S>(wo, px.normal).normalized();
      const Vec3<S> x_surf = origin + px.depth * dir;
      const VecX<S> sec_jitter = uniform_jitter<S>(opts.n_secondary, rng);
      const auto sec =
          query_prefiltered<S>(field, x_surf, omega_r, opts.n_secondary, sec_jitter);
      px.levels = sec.levels;
      px.d_reflect = sec.d_reflect;
      px.escaped = sec.escaped;
    }

    const Rgb<S> color = shade_pixel<S>(px, lut, spec, shade_opts);
    frame.beauty.set_rgb(y, x, color.template cast<float>());
    frame.albedo.set_rgb(y, x, px.albedo.template cast<float>());
    frame.roughness.planes[0](y, x) = float(px.rough);
    frame.irradiance.planes[0](y, x) = float(px.irr);
    frame.normal.set_rgb(y, x, Rgbf(px.normal.template cast<float>().array()));
    frame.depth.planes[0](y, x) = float(px.depth);
    if (opts.want_primary_levels)
      for (int j = 0; j < levels; ++j)
        frame.primary_levels[size_t(j)].set_rgb(
            y, x, Rgb<S>(out.levels[size_t(j)]).template cast<float>());
  });
  return frame;
}

// Monte-Carlo shading comparison path: the diffuse term is shared, but the
// specular term integrates GGX-sampled directions against the level-0
// radiance marched through the volume (N_d directions, N_r samples each).
template <typename S, class Field>
Image render_view_mc(const Field& field, const Camera& camera, const PrefilterSpec& spec,
                     const ShadeOptions& shade_opts, const RenderOptions& opts, int n_dirs) {
  const int w = camera.width, h = camera.height;
  Image beauty = Image::zeros(w, h, 3);
  parallel_for(std::int64_t(w) * h, [&](std::int64_t pix) {
    const int x = int(pix % w), y = int(pix / w);
    Prng rng(opts.seed, std::uint64_t(pix));
    const Vec3<S> origin = camera.position().cast<S>();
    const Vec3<S> dir = camera.pixel_direction(x, y).cast<S>();

    const VecX<S> jitter = uniform_jitter<S>(opts.n_primary, rng);
    const RayOutputs<S> out =
        march_primary<S>(field, origin, dir, S(camera.t_near), S(camera.t_far), opts.n_primary,
                         jitter, false);
    if (out.weight_sum < S(shade_opts.hit_threshold)) {
      beauty.set_rgb(y, x, (out.t_far_trans * shade_opts.background.template cast<S>())
                               .template cast<float>());
      return;
    }
    const auto nres = surface_normal<S>(field, origin, dir, S(camera.t_near), S(camera.t_far),
                                        opts.n_primary, jitter, S(opts.normal_step));
    const Vec3<S> n = nres.normal;
    const Vec3<S> wo = -dir;
    const S mu = clamp01(S(n.dot(wo)));
    const S gamma = std::max(S(kGammaMin), clamp01(out.rough));
    const S metallic = shade_opts.metallic_from_roughness ? S(1) - gamma : S(0);
    const Rgb<S> f0 = Rgb<S>::Constant(S(0.04)) + (out.albedo - S(0.04)) * metallic;
    const Rgb<S> fg = fresnel_gamma(mu, f0, gamma);
    Rgb<S> color = gamma * (S(1) - fg) * out.albedo * out.irr;

    // Equal-area stratified hemisphere directions; every direction marches
    // the volume for the level-0 radiance, so the evaluation count per hit
    // pixel is exactly N_d * N_r.
    const Vec3<S> x_surf = origin + out.depth * dir;
    const Frame<S> fr(n);
    const HemisphereSampleSet dirs =
        equal_area_stratified(n_dirs, hash_combine(opts.seed ^ 0x3C5Dull, std::uint64_t(pix)));
    Rgb<S> spec_acc = Rgb<S>::Zero();
    for (int k = 0; k < n_dirs; ++k) {
      const Vec3<S> wi = fr.to_world(dirs.dirs.col(k).cast<S>());
      const Vec3<S> so = x_surf + S(1e-3) * wi;
      const S t_exit =
          std::max(S(1e-4), ray_box_exit<S>(so, wi, field.bounds_min, field.bounds_max));
      VecX<S> sj = uniform_jitter<S>(opts.n_secondary, rng);
      const RayOutputs<S> sec =
          march_primary<S>(field, so, wi, S(0), t_exit, opts.n_secondary, sj, true);
      const Rgb<S> li = sec.levels.empty() ? Rgb<S>::Zero() : sec.levels[0];
      const S n_dot_wi = n.dot(wi);
      if (n_dot_wi <= S(1e-6) || mu <= S(0)) continue;
      Vec3<S> half_sum = wo + wi;
      if (half_sum.norm() < S(1e-9)) continue;
      const Vec3<S> hw = half_sum.normalized();
      const S d_term = ggx_d(S(n.dot(hw)), gamma);
      const Rgb<S> f_term = fresnel_schlick(clamp01(S(wo.dot(hw))), f0);
      const S g_term = smith_g(n_dot_wi, mu, gamma);
      const Rgb<S> brdf = f_term * (d_term * g_term / (S(4) * mu * n_dot_wi));
      spec_acc += brdf * li * (n_dot_wi / S(dirs.pdf(k)));
    }
    color += spec_acc / S(n_dirs);
    beauty.set_rgb(y, x, color.template cast<float>());
  });
  return beauty;
}

// ---------------------------------------------------------------------------
// Scene editing

struct RegionEdit {
  std::optional<Vec3f> box_min, box_max;  // world-space selector
  std::optional<std::string> mask_path;   // pixel-mask selector (gray > 0.5)
  std::optional<Rgbf> set_albedo;
  std::optional<float> set_roughness;
};

struct SdfPrimitive {
  enum class Kind { Sphere, Box };
  Kind kind = Kind::Sphere;
  Vec3f center = Vec3f::Zero();
  float radius = 0.25f;
  Vec3f extent = Vec3f::Constant(0.25f);
  float rounding = 0.0f;

  float eval(const Vec3f& p) const {
    if (kind == Kind::Sphere) return (p - center).norm() - radius;
    const Vec3f q = (p - center).cwiseAbs() - extent;
    const float outside = q.cwiseMax(0.0f).norm();
    const float inside = std::min(q.maxCoeff(), 0.0f);
    return outside + inside - rounding;
  }

  Vec3f normal(const Vec3f& p) const {
    const float h = 1e-3f;
    Vec3f g;
    for (int a = 0; a < 3; ++a) {
      Vec3f e = Vec3f::Zero();
      e(a) = h;
      g(a) = eval(p + e) - eval(p - e);
    }
    const float n = g.norm();
    return n > 0 ? Vec3f(g / n) : Vec3f::UnitZ();
  }
};

struct ObjectEdit {
  SdfPrimitive sdf;
  Rgbf albedo = Rgbf::Constant(0.5f);
  float roughness = 0.3f;
  float alpha = 0.0f;  // transparency: 1 = fully transparent
};

struct EditSpec {
  std::vector<RegionEdit> regions;
  std::vector<ObjectEdit> objects;

  bool empty() const { return regions.empty() && objects.empty(); }
};

// Structured-text edit file (JSON keys: box_min, box_max, mask_path,
// set_albedo, set_roughness, sdf, alpha). Masks referenced by path are
// resolved relative to the caller.
EditSpec load_edits(const std::string& path);

// Region edits override albedo/roughness in the buffers and re-shade those
// pixels; everything outside the selectors is untouched (bit-identical).
template <typename S>
Image apply_edits(const ViewFrame<S>& frame, const EditSpec& edits, const BrdfLut& lut,
                  const PrefilterSpec& spec) {
  Image out = frame.beauty;
  const int w = frame.camera.width, h = frame.camera.height;
  std::vector<std::optional<Image>> masks(edits.regions.size());
  for (size_t r = 0; r < edits.regions.size(); ++r)
    if (edits.regions[r].mask_path) masks[r] = read_pfm(*edits.regions[r].mask_path);

  bool any_selected = false;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const PixelBuffers<S>& px = frame.at(y, x);
      PixelBuffers<S> edited = px;
      bool selected = false;
      for (size_t r = 0; r < edits.regions.size(); ++r) {
        const RegionEdit& re = edits.regions[r];
        bool inside = false;
        if (re.box_min && re.box_max && px.hit) {
          const Vec3<S> surf =
              frame.camera.position().template cast<S>() + px.depth * px.dir;
          inside = (surf.array() >= re.box_min->cast<S>().array()).all() &&
                   (surf.array() <= re.box_max->cast<S>().array()).all();
        }
        if (!inside && masks[r]) inside = masks[r]->gray(y, x) > 0.5f;
        if (!inside) continue;
        selected = true;
        if (re.set_albedo) edited.albedo = re.set_albedo->cast<S>();
        if (re.set_roughness) edited.rough = S(*re.set_roughness);
      }
      if (!selected) continue;
      any_selected = true;
      out.set_rgb(y, x, shade_pixel<S>(edited, lut, spec, frame.shade_opts).template cast<float>());
    }
  if (!edits.regions.empty() && !any_selected)
    std::fprintf(stderr, "apply_edits: warning: selectors matched no pixels\n");
  return out;
}

// Sphere-trace an inserted SDF object and composite it against the frame.
// The object is shaded with the field's irradiance at the hit point and a
// fresh prefiltered query along its reflected direction, then alpha-blended
// with the radiance behind it.
template <typename S, class Field>
Image insert_object(const ViewFrame<S>& frame, const ObjectEdit& object, const Field& field,
                    const BrdfLut& lut, const PrefilterSpec& spec,
                    const RenderOptions& ropts) {
  Image out = frame.beauty;
  if (object.alpha >= 1.0f) return out;  // fully transparent
  const int w = frame.camera.width, h = frame.camera.height;
  const Camera& cam = frame.camera;

  parallel_for(std::int64_t(w) * h, [&](std::int64_t pix) {
    const int x = int(pix % w), y = int(pix / w);
    const PixelBuffers<S>& px = frame.pixels[size_t(pix)];
    const Vec3f origin = cam.position().cast<float>();
    const Vec3f dir = px.dir.template cast<float>();

    float t = float(cam.t_near);
    bool converged = false;
    for (int step = 0; step < 256; ++step) {
      const float d = object.sdf.eval(origin + t * dir);
      if (d < 1e-4f) {
        converged = true;
        break;
      }
      t += d;
      if (t > float(cam.t_far)) break;
    }
    if (!converged) return;
    if (px.hit && S(t) >= px.depth) return;  // behind existing geometry

    const Vec3f hitp = origin + t * dir;
    PixelBuffers<S> obj;
    obj.hit = true;
    obj.dir = px.dir;
    obj.depth = S(t);
    obj.albedo = object.albedo.cast<S>();
    obj.rough = S(object.roughness);
    obj.irr = S(eval_point<S>(field, hitp.cast<S>()).irr);
    obj.normal = object.sdf.normal(hitp).cast<S>();
    if (obj.normal.dot(-obj.dir) < S(0)) obj.normal = -obj.normal;

    const Vec3<S> omega_r = reflect<S>(Vec3<S>(-obj.dir), obj.normal).normalized();
    Prng rng(ropts.seed ^ 0x0BEC7ull, std::uint64_t(pix));
    const VecX<S> jitter = uniform_jitter<S>(ropts.n_secondary, rng);
    const auto sec =
        query_prefiltered<S>(field, Vec3<S>(hitp.cast<S>()), omega_r, ropts.n_secondary, jitter);
    obj.levels = sec.levels;
    obj.d_reflect = sec.d_reflect;
    obj.escaped = sec.escaped;

    const Rgb<S> color = shade_pixel<S>(obj, lut, spec, frame.shade_opts);
    const float a = object.alpha;
    const Rgbf behind = out.rgb(y, x);
    out.set_rgb(y, x, Rgbf((1.0f - a) * color.template cast<float>() + a * behind));
  });
  return out;
}

}  // namespace iblkit
