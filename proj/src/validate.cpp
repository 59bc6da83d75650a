// Copyright (c) 2026 The iblkit Authors.
// SPDX-License-Identifier: Apache-2.0

#include "iblkit/validate.hpp"

#include <cstdio>

#include "iblkit/brdf.hpp"
#include "iblkit/lut.hpp"
#include "iblkit/mc.hpp"
#include "iblkit/prefilter.hpp"
#include "iblkit/shade.hpp"
#include "iblkit/train.hpp"

namespace iblkit {

namespace {

void push(SuiteReport& r, const std::string& name, double measured, double threshold,
          bool less_is_pass = true) {
  CheckLine c;
  c.name = name;
  c.measured = measured;
  c.threshold = threshold;
  c.pass = less_is_pass ? measured < threshold : measured > threshold;
  r.checks.push_back(std::move(c));
}

double ggx_mass(double gamma) {
  const double alpha = gamma * gamma;
  const double a2 = alpha * alpha;
  const int steps = 100000;
  double sum = 0.0;
  const double dt = 0.5 * kPi<double> / steps;
  for (int i = 0; i < steps; ++i) {
    const double t = (i + 0.5) * dt;
    const double c = std::cos(t);
    const double d = a2 / (kPi<double> * std::pow(c * c * (a2 - 1.0) + 1.0, 2.0));
    sum += d * c * std::sin(t) * dt;
  }
  return 2.0 * kPi<double> * sum;
}

SuiteReport suite_brdf(std::uint64_t seed) {
  SuiteReport r{"brdf", {}};
  for (double g : {0.1, 0.5, 1.0})
    push(r, "ggx_d projected mass err (gamma " + std::to_string(g) + ")",
         std::abs(ggx_mass(g) - 1.0), 0.02);

  double mono_violation = 0.0;
  for (double f0v : {0.0, 0.04, 1.0}) {
    double prev = 1e9;
    for (int i = 0; i < 100; ++i) {
      const double v = fresnel_schlick(i / 99.0, Rgbd::Constant(f0v))(0);
      mono_violation = std::max(mono_violation, v - prev);
      prev = v;
    }
  }
  push(r, "fresnel_schlick monotone violation", mono_violation, 1e-12);

  Prng rng(seed + 1);
  double recip = 0.0;
  for (int it = 0; it < 64; ++it) {
    const Vec3d n(0, 0, 1);
    auto dir = [&] {
      const double z = 0.05 + 0.95 * rng.next_double();
      const double p = 2.0 * kPi<double> * rng.next_double();
      const double s = std::sqrt(1.0 - z * z);
      return Vec3d(s * std::cos(p), s * std::sin(p), z);
    };
    MicrofacetParamsD m;
    m.albedo = Rgbd(rng.next_double(), rng.next_double(), rng.next_double());
    m.roughness = 0.05 + 0.95 * rng.next_double();
    m.metallic = rng.next_double();
    const Vec3d wo = dir(), wi = dir();
    const Rgbd a = specular_brdf(ShadingGeometry<double>::make(n, wo, wi), m);
    const Rgbd b = specular_brdf(ShadingGeometry<double>::make(n, wi, wo), m);
    recip = std::max(recip, double((a - b).abs().maxCoeff()));
  }
  push(r, "specular_brdf reciprocity max deviation", recip, 1e-10);
  push(r, "smith_g closed form err", std::abs(smith_g(0.5, 0.5, 1.0) - 4.0 / 9.0), 1e-12);
  return r;
}

SuiteReport suite_lut(std::uint64_t seed) {
  SuiteReport r{"lut", {}};
  const BrdfLut lut = compute_lut(32, 1 << 13, seed + 5);
  const BrdfLut again = compute_lut(32, 1 << 13, seed + 5);
  push(r, "determinism max diff", double((lut.scale - again.scale).abs().maxCoeff()), 1e-12);
  push(r, "entries min", double(std::min(lut.scale.minCoeff(), lut.bias.minCoeff())), -1e-9,
       false);
  push(r, "scale+bias max", double((lut.scale + lut.bias).maxCoeff()), 1.0 + 1e-3);
  const auto near_mirror = lut_cell_estimate(1.0 - 1e-4, kGammaMin + 1e-4, 1 << 13, seed + 6);
  push(r, "near-mirror scale err", std::abs(near_mirror.first - 1.0), 0.01);
  push(r, "near-mirror bias", near_mirror.second, 0.01);
  const auto v = fetch<double>(lut, double(lut.cos_center(7)), double(lut.gamma_center(9)));
  push(r, "fetch cell-center identity err", std::abs(v(0) - double(lut.scale(7, 9))), 1e-7);
  double mono = 0.0;
  for (int j = 0; j < 32; ++j)
    for (int i = 1; i < 32; ++i)
      if (lut.cos_center(i - 1) >= 0.06f)
        mono = std::max(mono, double(lut.bias(i, j) - lut.bias(i - 1, j)));
  push(r, "bias monotonicity violation (cos >= 0.06)", mono, 1e-3);
  return r;
}

SuiteReport suite_kernel(std::uint64_t) {
  SuiteReport r{"kernel", {}};
  const ScreenKernel sharp = analytic_kernel(kGammaMin, 128.0, 4);
  push(r, "near-delta center mass", double(sharp.weights(4, 4)), 0.99, false);
  double prev = -1.0;
  bool increasing = true;
  for (double g : {0.1, 1.0 / 3.0, 2.0 / 3.0, 1.0}) {
    const ScreenKernel k = analytic_kernel(g, 128.0, 64);
    double m2 = 0.0;
    for (int y = -64; y <= 64; ++y)
      for (int x = -64; x <= 64; ++x)
        m2 += double(k.weights(y + 64, x + 64)) * (x * x + y * y);
    increasing = increasing && m2 > prev;
    prev = m2;
    push(r, "normalization err (gamma " + std::to_string(g) + ")",
         std::abs(double(k.weights.sum()) - 1.0), 1e-5);
  }
  push(r, "variance strictly increasing", increasing ? 1.0 : 0.0, 0.5, false);
  return r;
}

SuiteReport suite_volume(std::uint64_t seed) {
  SuiteReport r{"volume", {}};
  const double sigma = 2.5, t_end = 1.2;
  const int n = 1024;
  RaySamples<double> s;
  s.delta = VecX<double>::Constant(n, t_end / n);
  s.t.resize(n);
  for (int i = 0; i < n; ++i) s.t(i) = (i + 0.5) * s.delta(i);
  PointBatch<double> pb;
  pb.sigma = RowX<double>::Constant(n, sigma);
  pb.irr = RowX<double>::Zero(n);
  pb.rough = RowX<double>::Zero(n);
  pb.albedo = Mat3X<double>::Zero(3, n);
  const auto out = volume_accumulate<double>(s, pb, nullptr);
  push(r, "constant-sigma transmittance err",
       std::abs(out.t_far_trans - std::exp(-sigma * t_end)), 1e-3);

  FieldConfig fc;
  fc.pos_encoding_order = 4;
  fc.trunk_depth = 2;
  fc.trunk_width = 12;
  fc.skip_layer = 1;
  fc.dir_hidden = 6;
  MlpField<double> field(FieldParams<double>::init(fc, seed + 9), Vec3d::Constant(-1),
                         Vec3d::Constant(1));
  Prng rng(seed + 10);
  double worst = 0.0;
  for (int it = 0; it < 2000; ++it) {
    const Vec3d origin(rng.next_double() - 0.5, rng.next_double() - 0.5, rng.next_double() - 0.5);
    Vec3d dir(2 * rng.next_double() - 1, 2 * rng.next_double() - 1, 2 * rng.next_double() - 1);
    if (dir.norm() < 1e-6) continue;
    dir.normalize();
    VecX<double> jitter = uniform_jitter<double>(24, rng);
    const auto ray = march_primary<double>(field, origin, dir, 0.05, 1.4, 24, jitter, false);
    worst = std::max(worst, std::abs(ray.weight_sum + ray.t_far_trans - 1.0));
  }
  push(r, "sum(w) + T_far identity max err (2000 rays)", worst, 1e-6);
  return r;
}

SuiteReport suite_splitsum(std::uint64_t seed) {
  SuiteReport r{"splitsum", {}};
  const BrdfLut lut = compute_lut(64, 1 << 14, seed + 21);
  Prng rng(seed + 22);
  RadianceFn unit = [](const Vec3d&, const Vec3d&) { return Rgbd::Ones(); };
  double worst_sigma = 0.0;
  for (int it = 0; it < 20; ++it) {
    const double cos_v = 0.1 + 0.9 * rng.next_double();
    const double gamma = kGammaMin + (1.0 - kGammaMin) * rng.next_double();
    MicrofacetParamsD m;
    m.albedo = Rgbd::Constant(rng.next_double());
    m.metallic = 1.0;
    m.roughness = gamma;
    const Vec3d n(0, 0, 1);
    const Vec3d wo(std::sqrt(1.0 - cos_v * cos_v), 0.0, cos_v);
    const auto est = mc_specular(unit, Vec3d::Zero(), wo, n, m, 2048, hash_combine(seed, it));
    const auto sb = fetch<double>(lut, cos_v, gamma);
    const Rgbd expected = m.f0() * sb(0) + sb(1);
    for (int c = 0; c < 3; ++c) {
      const double se = std::max(est.std_error(c), 1e-5);
      worst_sigma = std::max(worst_sigma, std::abs(est.value(c) - expected(c)) / se);
    }
  }
  push(r, "constant-radiance split-sum worst deviation (sigmas)", worst_sigma, 3.5);
  return r;
}

SuiteReport suite_gradients(std::uint64_t seed) {
  SuiteReport r{"gradients", {}};
  FieldConfig fc;
  fc.pos_encoding_order = 2;
  fc.dir_encoding_order = 1;
  fc.trunk_depth = 2;
  fc.trunk_width = 10;
  fc.skip_layer = 1;
  fc.dir_hidden = 6;
  MlpField<double> field(FieldParams<double>::init(fc, seed + 31), Vec3d::Constant(-1.5),
                         Vec3d::Constant(1.5));
  field.params.tensor("sigma_b")(0, 0) = 1.1;

  TrainConfig cfg;
  cfg.n_primary = 6;
  cfg.n_secondary = 5;
  cfg.schedule.batch_rays = 4;
  cfg.schedule.total_steps = 12;
  cfg.schedule.phase1_end = 4;
  cfg.schedule.phase2_end = 8;
  cfg.shade.background = Rgbf(0.2f, 0.25f, 0.3f);
  cfg.seed = seed + 32;

  TrainData data;
  TrainView view;
  view.camera = Camera::look_at({0, 0, 1.2}, {0.1, -0.05, 0}, {0, 1, 0}, 10, 8, 8, 0.2, 2.6);
  Prng rng(seed + 33);
  for (int j = 0; j < 4; ++j) {
    Image img = Image::zeros(8, 8, 3);
    for (auto& plane : img.planes)
      plane = Eigen::ArrayXXf::NullaryExpr(8, 8, [&] { return 0.2f + 0.6f * rng.next_float(); });
    view.blurred.push_back(img);
  }
  Image prior = Image::zeros(8, 8, 3);
  for (auto& plane : prior.planes)
    plane = Eigen::ArrayXXf::NullaryExpr(8, 8, [&] { return rng.next_float(); });
  view.albedo_prior = prior;
  data.views.push_back(view);
  data.mean_irr = 0.62;
  data.has_priors = true;

  const BrdfLut lut = compute_lut(16, 1 << 11, seed + 34);
  const PrefilterSpec spec = PrefilterSpec::defaults(1.0);

  for (int step : {0, 5, 9}) {
    const BatchSnapshot<double> snap = make_snapshot<double>(field, data, cfg, step);
    VecX<double> grad = VecX<double>::Zero(field.params.flat.size());
    forward_backward<double>(field.params, field.bounds_min, field.bounds_max, snap, lut, spec,
                             cfg, &grad);
    const double h = 1e-5;
    double worst = 0.0;
    FieldParams<double> probe = field.params;
    for (Eigen::Index i = 0; i < probe.flat.size(); ++i) {
      const double keep = probe.flat(i);
      probe.flat(i) = keep + h;
      const double lp = forward_backward<double>(probe, field.bounds_min, field.bounds_max, snap,
                                                 lut, spec, cfg, nullptr)
                            .total;
      probe.flat(i) = keep - h;
      const double lm = forward_backward<double>(probe, field.bounds_min, field.bounds_max, snap,
                                                 lut, spec, cfg, nullptr)
                            .total;
      probe.flat(i) = keep;
      const double fd = (lp - lm) / (2 * h);
      const double denom = std::max({std::abs(fd), std::abs(grad(i)), 1e-6});
      worst = std::max(worst, std::abs(fd - grad(i)) / denom);
    }
    push(r, "phase " + std::to_string(cfg.schedule.phase_of(step)) + " max rel err", worst, 1e-3);
  }
  return r;
}

SuiteReport suite_counters(std::uint64_t seed) {
  SuiteReport r{"counters", {}};
  SyntheticField<double> field;
  field.bounds_min = Vec3d::Constant(-1.5);
  field.bounds_max = Vec3d::Constant(1.5);
  field.sigma_fn = [](const Vec3d& x) {
    const double m = x.cwiseAbs().maxCoeff();
    return m > 0.8 ? 30.0 * std::min(1.0, (m - 0.8) / 0.1) : 0.0;
  };
  field.albedo_fn = [](const Vec3d&) { return Rgbd::Constant(0.5); };
  field.irr_fn = [](const Vec3d&) { return 0.5; };
  field.level_fn = [](const Vec3d&, const Vec3d&, int) { return Rgbd::Constant(0.4); };

  const Camera cam = Camera::look_at({0, 0, 0}, {0.1, 0, -1}, {0, 1, 0}, 16, 12, 12, 0.05, 4.0);
  const BrdfLut lut = compute_lut(16, 1 << 11, seed + 41);
  const PrefilterSpec spec = PrefilterSpec::defaults(2.0);
  RenderOptions ropts;
  ropts.n_primary = 24;
  ropts.n_secondary = 16;

  field.counters = {};
  const auto frame = render_view<double>(field, cam, lut, spec, ShadeOptions{}, ropts);
  int hits = 0;
  for (const auto& px : frame.pixels) hits += px.hit ? 1 : 0;
  const std::uint64_t pixels = 144;
  const double expected = double(pixels) * ropts.n_primary + double(hits) * ropts.n_secondary;
  push(r, "split-sum path counter deviation",
       std::abs(double(field.counters.point_evals.load()) - expected), 0.5);

  field.counters = {};
  const int n_dirs = 8;
  render_view_mc<double>(field, cam, spec, ShadeOptions{}, ropts, n_dirs);
  const double expected_mc =
      double(pixels) * ropts.n_primary + double(hits) * n_dirs * ropts.n_secondary;
  push(r, "mc path counter deviation",
       std::abs(double(field.counters.point_evals.load()) - expected_mc), 0.5);
  return r;
}

}  // namespace

SuiteReport run_validate_suite(const std::string& suite, std::uint64_t seed) {
  if (suite == "brdf") return suite_brdf(seed);
  if (suite == "lut") return suite_lut(seed);
  if (suite == "kernel") return suite_kernel(seed);
  if (suite == "volume") return suite_volume(seed);
  if (suite == "splitsum") return suite_splitsum(seed);
  if (suite == "gradients") return suite_gradients(seed);
  if (suite == "counters") return suite_counters(seed);
  throw std::invalid_argument("validate: unknown suite '" + suite + "'");
}

void print_report(const SuiteReport& report) {
  std::printf("suite %s\n", report.suite.c_str());
  for (const auto& c : report.checks)
    std::printf("  [%s] %-55s measured %.3e vs %.3e\n", c.pass ? "PASS" : "FAIL", c.name.c_str(),
                c.measured, c.threshold);
  std::printf("suite %s: %s\n", report.suite.c_str(), report.pass() ? "PASS" : "FAIL");
}

}  // namespace iblkit
