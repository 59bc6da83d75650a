// Copyright (c) 2026 The iblkit Authors.
// SPDX-License-Identifier: Apache-2.0

#include "iblkit/mc.hpp"

#include <fstream>

#include <json.hpp>

namespace iblkit {

HemisphereSampleSet equal_area_stratified(int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("equal_area_stratified: need at least one sample");
  const int rows = int(std::ceil(std::sqrt(double(n))));
  const int base_cols = n / rows;
  HemisphereSampleSet set;
  set.dirs.resize(3, n);
  set.pdf = Eigen::VectorXd::Constant(n, 1.0 / (2.0 * kPi<double>));

  Prng rng(seed);
  int idx = 0;
  double z0 = 0.0;
  for (int r = 0; r < rows; ++r) {
    const int cols = (r == rows - 1) ? n - base_cols * (rows - 1) : base_cols;
    const double band = double(cols) / double(n);  // equal stratum areas
    for (int c = 0; c < cols; ++c) {
      const double z = z0 + band * rng.next_double();
      const double phi = 2.0 * kPi<double> * (double(c) + rng.next_double()) / double(cols);
      const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
      set.dirs.col(idx++) = Vec3d(s * std::cos(phi), s * std::sin(phi), z);
    }
    z0 += band;
  }
  return set;
}

McEstimate mc_specular(const RadianceFn& radiance, const Vec3d& pos, const Vec3d& wo,
                       const Vec3d& normal, const MicrofacetParamsD& params, int n,
                       std::uint64_t seed) {
  if (normal.dot(wo) <= 0.0) throw std::domain_error("mc_specular: backfacing view direction");
  const double gamma = std::max(kGammaMin, std::min(1.0, params.roughness));
  const Frame<double> frame(normal);
  Prng rng(seed);

  Rgbd sum = Rgbd::Zero(), sum_sq = Rgbd::Zero();
  for (int k = 0; k < n; ++k) {
    const double u1 = rng.next_double();
    const double u2 = rng.next_double();
    const auto hs = ggx_sample(u1, u2, gamma);
    const Vec3d h = frame.to_world(hs.h);
    const double wo_dot_h = wo.dot(h);
    Rgbd term = Rgbd::Zero();
    if (wo_dot_h > 0.0) {
      const Vec3d wi = 2.0 * wo_dot_h * h - wo;
      const double n_dot_wi = normal.dot(wi);
      if (n_dot_wi > 1e-9) {
        const double pdf_wi = hs.pdf / (4.0 * wo_dot_h);
        MicrofacetParamsD clamped = params;
        clamped.roughness = gamma;
        const auto geom = ShadingGeometry<double>::make(normal, wo, wi);
        term = specular_brdf(geom, clamped) * radiance(pos, wi) * (n_dot_wi / pdf_wi);
      }
    }
    sum += term;
    sum_sq += term * term;
  }
  McEstimate est;
  est.value = sum / double(n);
  const Rgbd var = (sum_sq / double(n) - est.value * est.value).max(0.0);
  est.std_error = (var / double(n)).sqrt();
  return est;
}

McEstimate mc_irradiance(const RadianceFn& radiance, const Vec3d& pos, const Vec3d& normal, int n,
                         std::uint64_t seed) {
  // Equal-area sampling: (1/pi) * mean(L * (n.w) / pdf) = (2/N) * sum(L * z).
  const HemisphereSampleSet set = equal_area_stratified(n, seed);
  const Frame<double> frame(normal);
  Rgbd sum = Rgbd::Zero(), sum_sq = Rgbd::Zero();
  for (int k = 0; k < n; ++k) {
    const Vec3d local = set.dirs.col(k);
    const Rgbd term = 2.0 * radiance(pos, frame.to_world(local)) * local.z();
    sum += term;
    sum_sq += term * term;
  }
  McEstimate est;
  est.value = sum / double(n);
  const Rgbd var = (sum_sq / double(n) - est.value * est.value).max(0.0);
  est.std_error = (var / double(n)).sqrt();
  return est;
}

// ---------------------------------------------------------------------------
// Geometry

double Primitive::rect_area() const {
  double area = 1.0;
  for (int a = 0; a < 3; ++a)
    if (extent(a) > 0.0) area *= 2.0 * extent(a);
  return area;
}

void AnalyticScene::validate() const {
  const bool lit = (background > 0.0).any() ||
                   std::any_of(prims.begin(), prims.end(), [](const Primitive& p) { return p.emissive(); });
  if (!lit) throw std::runtime_error("scene has no emitter");
  for (const Primitive& p : prims) {
    const Vec3d half = p.kind == Primitive::Kind::Sphere ? Vec3d::Constant(p.radius) : p.extent;
    if (((p.center - half).array() < bounds_min.array() - 1e-6).any() ||
        ((p.center + half).array() > bounds_max.array() + 1e-6).any())
      throw std::runtime_error("primitive outside scene bounds");
  }
}

namespace {

bool hit_sphere(const Primitive& p, const Vec3d& o, const Vec3d& d, double t_min, double t_max,
                double& t, Vec3d& n) {
  const Vec3d oc = o - p.center;
  const double b = oc.dot(d);
  const double c = oc.squaredNorm() - p.radius * p.radius;
  const double disc = b * b - c;
  if (disc < 0.0) return false;
  const double sq = std::sqrt(disc);
  double root = -b - sq;
  if (root < t_min) root = -b + sq;
  if (root < t_min || root > t_max) return false;
  t = root;
  n = (o + t * d - p.center) / p.radius;
  return true;
}

bool hit_box(const Primitive& p, const Vec3d& o, const Vec3d& d, double t_min, double t_max,
             double& t, Vec3d& n) {
  double t0 = t_min, t1 = t_max;
  int axis0 = -1, axis1 = -1;
  for (int a = 0; a < 3; ++a) {
    const double inv = 1.0 / d(a);
    double ta = (p.center(a) - p.extent(a) - o(a)) * inv;
    double tb = (p.center(a) + p.extent(a) - o(a)) * inv;
    if (ta > tb) std::swap(ta, tb);
    if (ta > t0) {
      t0 = ta;
      axis0 = a;
    }
    if (tb < t1) {
      t1 = tb;
      axis1 = a;
    }
    if (t0 > t1) return false;
  }
  if (t0 > t_min && axis0 >= 0) {
    t = t0;
    n = Vec3d::Zero();
    n(axis0) = d(axis0) > 0 ? -1.0 : 1.0;
    return true;
  }
  if (t1 > t_min && t1 < t_max && axis1 >= 0) {
    // Origin inside the box: exit face, outward normal.
    t = t1;
    n = Vec3d::Zero();
    n(axis1) = d(axis1) > 0 ? 1.0 : -1.0;
    return true;
  }
  return false;
}

bool hit_rect(const Primitive& p, const Vec3d& o, const Vec3d& d, double t_min, double t_max,
              double& t, Vec3d& n) {
  int axis = -1;
  for (int a = 0; a < 3; ++a)
    if (p.extent(a) == 0.0) axis = a;
  if (axis < 0) return false;
  if (std::abs(d(axis)) < 1e-12) return false;
  const double tt = (p.center(axis) - o(axis)) / d(axis);
  if (tt < t_min || tt > t_max) return false;
  const Vec3d q = o + tt * d;
  for (int a = 0; a < 3; ++a)
    if (a != axis && std::abs(q(a) - p.center(a)) > p.extent(a)) return false;
  t = tt;
  n = Vec3d::Zero();
  n(axis) = d(axis) > 0 ? -1.0 : 1.0;  // face the incoming ray
  return true;
}

}  // namespace

std::optional<SceneHit> intersect(const AnalyticScene& scene, const Vec3d& origin,
                                  const Vec3d& dir, double t_min, double t_max) {
  SceneHit best;
  best.t = t_max;
  bool found = false;
  for (size_t i = 0; i < scene.prims.size(); ++i) {
    const Primitive& p = scene.prims[i];
    double t;
    Vec3d n;
    bool hit = false;
    switch (p.kind) {
      case Primitive::Kind::Sphere:
        hit = hit_sphere(p, origin, dir, t_min, best.t, t, n);
        break;
      case Primitive::Kind::Box:
        hit = hit_box(p, origin, dir, t_min, best.t, t, n);
        break;
      case Primitive::Kind::Rect:
        hit = hit_rect(p, origin, dir, t_min, best.t, t, n);
        break;
    }
    if (hit && t < best.t) {
      best.t = t;
      best.normal = n;
      best.prim = int(i);
      found = true;
    }
  }
  if (!found) return std::nullopt;
  best.pos = origin + best.t * dir;
  return best;
}

// ---------------------------------------------------------------------------
// Reference light transport

namespace {

double scene_eps(const AnalyticScene& scene) {
  return 1e-4 * (scene.bounds_max - scene.bounds_min).norm();
}

Rgbd eval_brdf(const MicrofacetParamsD& mat, const Vec3d& n, const Vec3d& wo, const Vec3d& wi) {
  const double n_dot_wi = n.dot(wi);
  const double n_dot_wo = n.dot(wo);
  if (n_dot_wi <= 1e-9 || n_dot_wo <= 1e-9) return Rgbd::Zero();
  Vec3d sum = wo + wi;
  if (sum.norm() < 1e-9) return Rgbd::Zero();
  const Vec3d h = sum.normalized();
  const Rgbd f = fresnel_schlick(clamp01(wo.dot(h)), mat.f0());
  const Rgbd diff = (1.0 - mat.metallic) * (1.0 - f) * mat.albedo / kPi<double>;
  MicrofacetParamsD clamped = mat;
  clamped.roughness = std::max(kGammaMin, std::min(1.0, mat.roughness));
  const auto geom = ShadingGeometry<double>::make(n, wo, wi);
  return diff + specular_brdf(geom, clamped);
}

// Next-event direct lighting from rect emitters (area sampling, 1 sample per
// light). Returns radiance; with divide_pi it returns the irradiance share.
Rgbd nee_direct(const AnalyticScene& scene, const Vec3d& x, const Vec3d& n, const Vec3d& wo,
                const MicrofacetParamsD* mat, Prng& rng) {
  Rgbd out = Rgbd::Zero();
  const double eps = scene_eps(scene);
  for (size_t i = 0; i < scene.prims.size(); ++i) {
    const Primitive& light = scene.prims[i];
    if (!light.emissive() || light.kind != Primitive::Kind::Rect) continue;
    int axis = 0;
    for (int a = 0; a < 3; ++a)
      if (light.extent(a) == 0.0) axis = a;
    Vec3d q = light.center;
    for (int a = 0; a < 3; ++a)
      if (a != axis) q(a) += light.extent(a) * (2.0 * rng.next_double() - 1.0);
    const Vec3d to_q = q - x;
    const double dist = to_q.norm();
    if (dist < eps) continue;
    const Vec3d wl = to_q / dist;
    const double cos_s = n.dot(wl);
    if (cos_s <= 0.0) continue;
    const double cos_l = std::abs(wl(axis));  // both faces emit
    if (cos_l <= 0.0) continue;
    const auto occ = intersect(scene, x + eps * wl, wl, 0.0, dist - 2.0 * eps);
    if (occ && occ->prim != int(i)) continue;
    const double geom_term = cos_s * cos_l * light.rect_area() / (dist * dist);
    if (mat)
      out += eval_brdf(*mat, n, wo, wl) * light.emission * geom_term;
    else
      out += light.emission * geom_term / kPi<double>;  // irradiance convention
  }
  return out;
}

}  // namespace

Rgbd trace_radiance(const AnalyticScene& scene, const Vec3d& origin, const Vec3d& dir,
                    double t_max, int bounces, Prng& rng, bool include_emitters,
                    int n_cos, int n_ggx) {
  const auto hit = intersect(scene, origin, dir, 0.0, t_max);
  if (!hit) return scene.background;
  const Primitive& prim = scene.prims[size_t(hit->prim)];
  if (prim.emissive()) return include_emitters ? prim.emission : Rgbd::Zero();

  const Vec3d wo = -dir;
  Vec3d n = hit->normal;
  if (n.dot(wo) < 0.0) n = -n;
  const Vec3d x = hit->pos + scene_eps(scene) * n;
  const MicrofacetParamsD& mat = prim.material;

  Rgbd out = nee_direct(scene, x, n, wo, &mat, rng);
  if (bounces <= 0) return out;

  const Frame<double> frame(n);
  const double gamma = std::max(kGammaMin, std::min(1.0, mat.roughness));

  // Diffuse share: cosine sampling, pdf = cos/pi.
  Rgbd diff_acc = Rgbd::Zero();
  for (int k = 0; k < n_cos; ++k) {
    const Vec3d wi = frame.to_world(cosine_sample(rng.next_double(), rng.next_double()));
    const Rgbd li =
        trace_radiance(scene, x, wi, t_max, bounces - 1, rng, false, n_cos, n_ggx);
    if ((li > 0.0).any()) {
      const Vec3d h = (wo + wi).normalized();
      const Rgbd f = fresnel_schlick(clamp01(wo.dot(h)), mat.f0());
      diff_acc += (1.0 - mat.metallic) * (1.0 - f) * mat.albedo * li;
    }
  }
  out += diff_acc / double(n_cos);

  // Specular share: GGX sampling of the halfway vector.
  Rgbd spec_acc = Rgbd::Zero();
  for (int k = 0; k < n_ggx; ++k) {
    const auto hs = ggx_sample(rng.next_double(), rng.next_double(), gamma);
    const Vec3d h = frame.to_world(hs.h);
    const double wo_dot_h = wo.dot(h);
    if (wo_dot_h <= 0.0) continue;
    const Vec3d wi = 2.0 * wo_dot_h * h - wo;
    const double n_dot_wi = n.dot(wi);
    if (n_dot_wi <= 1e-9) continue;
    const Rgbd li = trace_radiance(scene, x, wi, t_max, bounces - 1, rng, false, n_cos, n_ggx);
    if ((li > 0.0).any()) {
      const double pdf_wi = hs.pdf / (4.0 * wo_dot_h);
      MicrofacetParamsD clamped = mat;
      clamped.roughness = gamma;
      const auto geom = ShadingGeometry<double>::make(n, wo, wi);
      spec_acc += specular_brdf(geom, clamped) * li * (n_dot_wi / pdf_wi);
    }
  }
  out += spec_acc / double(n_ggx);
  return out;
}

RefFrame render_reference(const AnalyticScene& scene, const Camera& camera, int spp,
                          std::uint64_t seed, const RenderRefOptions& opts) {
  scene.validate();
  const int w = camera.width, h = camera.height;
  RefFrame fr;
  fr.beauty = Image::zeros(w, h, 3);
  fr.albedo = Image::zeros(w, h, 3);
  fr.roughness = Image::zeros(w, h, 1);
  fr.normal = Image::zeros(w, h, 3);
  fr.depth = Image::zeros(w, h, 1);
  fr.irradiance = Image::zeros(w, h, 1);

  parallel_for(std::int64_t(w) * h, [&](std::int64_t pix) {
    const int x = int(pix % w), y = int(pix / w);
    Rgbd beauty = Rgbd::Zero(), albedo = Rgbd::Zero();
    Vec3d normal = Vec3d::Zero();
    double rough = 0, depth = 0, irr = 0;
    for (int s = 0; s < spp; ++s) {
      Prng rng(seed, std::uint64_t(pix), std::uint64_t(s));
      const Vec3d dir = camera.pixel_direction(x, y, rng.next_double(), rng.next_double());
      const Vec3d org = camera.position();
      const auto hit = intersect(scene, org, dir, camera.t_near, camera.t_far);
      if (!hit) {
        beauty += scene.background;
        depth += camera.t_far;
        continue;
      }
      const Primitive& prim = scene.prims[size_t(hit->prim)];
      depth += hit->t;
      const Vec3d wo = -dir;
      Vec3d n = hit->normal;
      if (n.dot(wo) < 0.0) n = -n;
      normal += n;
      if (prim.emissive()) {
        beauty += prim.emission;
        rough += 1.0;
        continue;
      }
      const MicrofacetParamsD& mat = prim.material;
      albedo += mat.albedo;
      rough += mat.roughness;

      const Vec3d xo = hit->pos + scene_eps(scene) * n;
      beauty += nee_direct(scene, xo, n, wo, &mat, rng);
      {  // one sampled indirect bounce
        const Frame<double> frame(n);
        Rgbd diff_acc = Rgbd::Zero();
        for (int k = 0; k < opts.n_cos; ++k) {
          const Vec3d wi = frame.to_world(cosine_sample(rng.next_double(), rng.next_double()));
          const Rgbd li = trace_radiance(scene, xo, wi, camera.t_far, 0, rng, false, 0, 0);
          if ((li > 0.0).any()) {
            const Vec3d hh = (wo + wi).normalized();
            const Rgbd f = fresnel_schlick(clamp01(wo.dot(hh)), mat.f0());
            diff_acc += (1.0 - mat.metallic) * (1.0 - f) * mat.albedo * li;
          }
        }
        beauty += diff_acc / double(opts.n_cos);

        const double gamma = std::max(kGammaMin, std::min(1.0, mat.roughness));
        Rgbd spec_acc = Rgbd::Zero();
        for (int k = 0; k < opts.n_ggx; ++k) {
          const auto hs = ggx_sample(rng.next_double(), rng.next_double(), gamma);
          const Vec3d hh = frame.to_world(hs.h);
          const double wo_dot_h = wo.dot(hh);
          if (wo_dot_h <= 0.0) continue;
          const Vec3d wi = 2.0 * wo_dot_h * hh - wo;
          const double n_dot_wi = n.dot(wi);
          if (n_dot_wi <= 1e-9) continue;
          const Rgbd li = trace_radiance(scene, xo, wi, camera.t_far, 0, rng, false, 0, 0);
          if ((li > 0.0).any()) {
            const double pdf_wi = hs.pdf / (4.0 * wo_dot_h);
            MicrofacetParamsD clamped = mat;
            clamped.roughness = gamma;
            const auto geom = ShadingGeometry<double>::make(n, wo, wi);
            spec_acc += specular_brdf(geom, clamped) * li * (n_dot_wi / pdf_wi);
          }
        }
        beauty += spec_acc / double(opts.n_ggx);
      }
      {  // irradiance buffer: analytic-light share plus cosine-sampled rest
        Rgbd i_acc = nee_direct(scene, xo, n, wo, nullptr, rng);
        const Frame<double> frame(n);
        Rgbd cos_acc = Rgbd::Zero();
        for (int k = 0; k < opts.n_irr; ++k) {
          const Vec3d wi = frame.to_world(cosine_sample(rng.next_double(), rng.next_double()));
          cos_acc += trace_radiance(scene, xo, wi, camera.t_far, 0, rng, false, 0, 0);
        }
        i_acc += cos_acc / double(opts.n_irr);
        irr += i_acc.mean();
      }
    }
    const double inv = 1.0 / spp;
    fr.beauty.set_rgb(y, x, (beauty * inv).cast<float>());
    fr.albedo.set_rgb(y, x, (albedo * inv).cast<float>());
    fr.roughness.planes[0](y, x) = float(rough * inv);
    const double nn = normal.norm();
    fr.normal.set_rgb(y, x, nn > 1e-9 ? Rgbf((normal / nn).cast<float>().array())
                                      : Rgbf::Zero());
    fr.depth.planes[0](y, x) = float(depth * inv);
    fr.irradiance.planes[0](y, x) = float(irr * inv);
  });
  return fr;
}

// ---------------------------------------------------------------------------
// Scenes

AnalyticScene builtin_scene(const std::string& name) {
  AnalyticScene scene;
  auto add = [&scene](Primitive p) { scene.prims.push_back(std::move(p)); };
  auto mat = [](Rgbd a, double rough, double metal) {
    MicrofacetParamsD m;
    m.albedo = a;
    m.roughness = rough;
    m.metallic = metal;
    return m;
  };
  auto box = [&](Vec3d c, Vec3d e, MicrofacetParamsD m) {
    Primitive p;
    p.kind = Primitive::Kind::Box;
    p.center = c;
    p.extent = e;
    p.material = m;
    return p;
  };

  if (name == "box") {
    scene.bounds_min = Vec3d(-1.2, -0.2, -1.2);
    scene.bounds_max = Vec3d(1.2, 1.7, 1.2);
    scene.background = Rgbd::Zero();
    add(box({0, -0.05, 0}, {1.1, 0.05, 1.1}, mat({0.72, 0.72, 0.70}, 0.85, 0.0)));   // floor
    add(box({0, 1.55, 0}, {1.1, 0.05, 1.1}, mat({0.75, 0.75, 0.75}, 0.9, 0.0)));     // ceiling
    add(box({0, 0.75, -1.05}, {1.1, 0.85, 0.05}, mat({0.70, 0.71, 0.74}, 0.6, 0.1)));  // back
    add(box({0, 0.75, 1.05}, {1.1, 0.85, 0.05}, mat({0.62, 0.62, 0.62}, 0.85, 0.0)));  // front
    add(box({-1.05, 0.75, 0}, {0.05, 0.85, 1.1}, mat({0.65, 0.18, 0.15}, 0.8, 0.0)));  // left
    add(box({1.05, 0.75, 0}, {0.05, 0.85, 1.1}, mat({0.18, 0.58, 0.20}, 0.8, 0.0)));   // right
    {
      Primitive p;
      p.kind = Primitive::Kind::Sphere;
      p.center = Vec3d(-0.45, 0.32, -0.35);
      p.radius = 0.32;
      p.material = mat({0.25, 0.35, 0.70}, 0.95, 0.0);
      add(p);
    }
    {
      Primitive p;
      p.kind = Primitive::Kind::Sphere;
      p.center = Vec3d(0.45, 0.30, 0.25);
      p.radius = 0.30;
      p.material = mat({0.85, 0.75, 0.40}, 0.2, 0.8);
      add(p);
    }
    add(box({-0.10, 0.22, 0.45}, {0.22, 0.22, 0.22}, mat({0.60, 0.55, 0.50}, 0.5, 0.2)));
    {
      Primitive p;
      p.kind = Primitive::Kind::Rect;
      p.center = Vec3d(0, 1.495, 0);
      p.extent = Vec3d(0.45, 0.0, 0.45);
      p.emission = Rgbd(10.0, 10.0, 9.0);
      add(p);
    }
    return scene;
  }
  if (name == "floor") {
    scene.bounds_min = Vec3d(-10.5, -0.2, -10.5);
    scene.bounds_max = Vec3d(10.5, 10.5, 10.5);
    scene.background = Rgbd::Ones();
    add(box({0, -0.05, 0}, {10, 0.05, 10}, mat({0.6, 0.6, 0.6}, 1.0, 0.0)));
    return scene;
  }
  throw std::invalid_argument("builtin_scene: unknown scene '" + name + "'");
}

AnalyticScene load_scene(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_scene: cannot open " + path);
  nlohmann::json j;
  is >> j;
  AnalyticScene scene;
  auto vec3 = [](const nlohmann::json& a) { return Vec3d(a.at(0), a.at(1), a.at(2)); };
  scene.bounds_min = vec3(j.at("bounds_min"));
  scene.bounds_max = vec3(j.at("bounds_max"));
  if (j.contains("background")) scene.background = vec3(j.at("background")).array();
  for (const auto& pj : j.at("primitives")) {
    Primitive p;
    const std::string type = pj.at("type");
    if (type == "sphere") {
      p.kind = Primitive::Kind::Sphere;
      p.radius = pj.at("radius");
    } else if (type == "box") {
      p.kind = Primitive::Kind::Box;
      p.extent = vec3(pj.at("extent"));
    } else if (type == "rect") {
      p.kind = Primitive::Kind::Rect;
      p.extent = vec3(pj.at("extent"));
    } else {
      throw std::runtime_error("load_scene: unknown primitive type '" + type + "'");
    }
    p.center = vec3(pj.at("center"));
    if (pj.contains("albedo")) p.material.albedo = vec3(pj.at("albedo")).array();
    if (pj.contains("roughness")) p.material.roughness = pj.at("roughness");
    if (pj.contains("metallic")) p.material.metallic = pj.at("metallic");
    if (pj.contains("emission")) p.emission = vec3(pj.at("emission")).array();
    scene.prims.push_back(p);
  }
  scene.validate();
  return scene;
}

}  // namespace iblkit
