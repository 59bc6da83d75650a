// Copyright (c) 2026 The iblkit Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "iblkit/mc.hpp"
#include "iblkit/train.hpp"

using namespace iblkit;

namespace {

FieldConfig shrunk_config() {
  FieldConfig c;
  c.pos_encoding_order = 2;
  c.dir_encoding_order = 1;
  c.trunk_depth = 2;
  c.trunk_width = 10;
  c.skip_layer = 1;
  c.dir_hidden = 6;
  return c;
}

// A small training setup with synthetic targets, used by the FD checks.
struct GradSetup {
  MlpField<double> field;
  BrdfLut lut = compute_lut(16, 1 << 11, 3030);
  PrefilterSpec spec = PrefilterSpec::defaults(1.0);
  TrainConfig cfg;
  TrainData data;

  GradSetup() {
    field.params = FieldParams<double>::init(shrunk_config(), 404);
    // Nudge the density bias up so rays hit and the network is in a generic
    // configuration (away from ReLU/branch boundaries at zero init).
    field.params.tensor("sigma_b")(0, 0) = 1.1;
    field.bounds_min = Vec3d::Constant(-1.5);
    field.bounds_max = Vec3d::Constant(1.5);

    cfg.n_primary = 6;
    cfg.n_secondary = 5;
    cfg.schedule.batch_rays = 4;
    cfg.schedule.total_steps = 12;
    cfg.schedule.phase1_end = 4;
    cfg.schedule.phase2_end = 8;
    cfg.shade.background = Rgbf(0.2f, 0.25f, 0.3f);
    cfg.lambda_ireg = 0.1;
    cfg.seed = 11;

    TrainView view;
    view.camera = Camera::look_at({0, 0, 1.2}, {0.1, -0.05, 0}, {0, 1, 0}, 10, 8, 8, 0.2, 2.6);
    Prng rng(77);
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
  }

  // Relative error of analytic vs central-difference gradients over every
  // parameter, for the phase's active loss.
  double max_rel_error(int step, double h = 1e-5) {
    const BatchSnapshot<double> snap = make_snapshot<double>(field, data, cfg, step);
    VecX<double> grad = VecX<double>::Zero(field.params.flat.size());
    forward_backward<double>(field.params, field.bounds_min, field.bounds_max, snap, lut, spec,
                             cfg, &grad);
    double worst = 0;
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
    return worst;
  }
};

}  // namespace

TEST_CASE("loss closed forms") {
  Mat3X<double> a = Mat3X<double>::Zero(3, 1), b = Mat3X<double>::Zero(3, 1);
  CHECK(loss_render<double>(a, a) == 0.0);
  b(0, 0) = 0.1;
  CHECK(loss_render<double>(a, b) == doctest::Approx(0.01).epsilon(1e-12));
  // Doubling every residual quadruples the loss.
  Mat3X<double> c = Mat3X<double>::Zero(3, 1);
  c(0, 0) = 0.2;
  CHECK(loss_render<double>(a, c) == doctest::Approx(0.04).epsilon(1e-12));

  std::vector<Mat3X<double>> pred(3, a), tgt(3, a);
  CHECK(loss_pref<double>(pred, tgt) == 0.0);
  tgt[2] = b;
  CHECK(loss_pref<double>(pred, tgt) == doctest::Approx(loss_render<double>(a, b)));
  tgt[1] = b;
  CHECK(loss_pref<double>(pred, tgt) == doctest::Approx(0.02).epsilon(1e-9));
  std::vector<Mat3X<double>> bad(2, a);
  CHECK_THROWS_AS(loss_pref<double>(pred, bad), std::invalid_argument);

  RowX<double> irr = RowX<double>::Constant(5, 0.82);
  CHECK(loss_ireg<double>(irr, 0.62) == doctest::Approx(0.04).epsilon(1e-12));
  CHECK(loss_ireg<double>(irr, 0.82) == 0.0);

  Mat3X<double> nan_in = a;
  nan_in(1, 0) = std::nan("");
  CHECK_THROWS_AS(loss_render<double>(nan_in, b), std::runtime_error);
}

TEST_CASE("total_loss phase gating") {
  LossParts<double> parts{0.1, 0.2, 0.3, 0.4};
  CHECK(total_loss<double>({9.0, 0.5, 9.0, 9.0}, 0.1, 1) == doctest::Approx(0.5));
  CHECK(total_loss<double>(parts, 0.1, 2) == doctest::Approx(0.3));
  CHECK(total_loss<double>(parts, 0.1, 3) == doctest::Approx(0.64).epsilon(1e-12));
  CHECK(total_loss<double>(parts, 0.0, 3) == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("schedule phases and learning rate") {
  Schedule s;
  s.total_steps = 5000;
  s.phase1_end = 500;
  s.phase2_end = 4000;
  CHECK(s.phase_of(0) == 1);
  CHECK(s.phase_of(499) == 1);
  CHECK(s.phase_of(500) == 2);
  CHECK(s.phase_of(3999) == 2);
  CHECK(s.phase_of(4000) == 3);
  CHECK(s.lr_at(0) == doctest::Approx(5e-4));
  CHECK(s.lr_at(4999) == doctest::Approx(5e-5));
}

TEST_CASE("volume backward matches finite differences") {
  Prng rng(88);
  const int n = 12;
  VecX<double> delta = VecX<double>::Constant(n, 0.11);
  VecX<double> t(n);
  for (int i = 0; i < n; ++i) t(i) = 0.1 + (i + 0.3) * 0.11;
  RowX<double> sigma = RowX<double>::NullaryExpr(n, [&] { return 2.0 * rng.next_double(); });
  RowX<double> value = RowX<double>::NullaryExpr(n, [&] { return rng.next_double(); });

  // Scalar objective: c1 * accumulated value + c2 * depth + c3 * T_far.
  const double c1 = 0.7, c2 = -0.4, c3 = 1.3;
  auto objective = [&](const RowX<double>& sg) {
    VecX<double> w;
    double tf;
    volume_weights<double>(sg, delta, w, tf);
    return c1 * value.dot(w.transpose()) + c2 * t.dot(w) + c3 * tf;
  };

  VecX<double> w;
  double tf;
  volume_weights<double>(sigma, delta, w, tf);
  VecX<double> g_w(n);
  for (int i = 0; i < n; ++i) g_w(i) = c1 * value(i) + c2 * t(i);
  RowX<double> d_sigma;
  volume_backward_sigma<double>(sigma, delta, w, tf, g_w, c3, d_sigma);

  const double h = 1e-6;
  for (int i = 0; i < n; ++i) {
    RowX<double> sp = sigma, sm = sigma;
    sp(i) += h;
    sm(i) -= h;
    const double fd = (objective(sp) - objective(sm)) / (2 * h);
    CHECK(std::abs(fd - d_sigma(i)) < 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("gradients match finite differences in every phase") {
  GradSetup setup;
  SUBCASE("phase 1: prefiltered loss only") { CHECK(setup.max_rel_error(0) < 1e-3); }
  SUBCASE("phase 2: prefiltered plus render loss") { CHECK(setup.max_rel_error(5) < 1e-3); }
  SUBCASE("phase 3: all four terms") { CHECK(setup.max_rel_error(9) < 1e-3); }
}

TEST_CASE("phase 1 leaves appearance heads untouched") {
  GradSetup setup;
  const BatchSnapshot<double> snap = make_snapshot<double>(setup.field, setup.data, setup.cfg, 0);
  VecX<double> grad = VecX<double>::Zero(setup.field.params.flat.size());
  forward_backward<double>(setup.field.params, setup.field.bounds_min, setup.field.bounds_max,
                           snap, setup.lut, setup.spec, setup.cfg, &grad);
  for (const char* name : {"albedo_w", "albedo_b", "irr_w", "irr_b", "rough_w", "rough_b"}) {
    const TensorInfo& info = setup.field.params.find(name);
    CHECK(grad.segment(info.offset, std::ptrdiff_t(info.rows) * info.cols).cwiseAbs().maxCoeff() ==
          0.0);
  }
  // Density and level heads do receive gradient in phase 1.
  const TensorInfo& sw = setup.field.params.find("sigma_w");
  CHECK(grad.segment(sw.offset, std::ptrdiff_t(sw.rows) * sw.cols).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("phase 3 freezes the roughness head bitwise") {
  GradSetup setup;
  Trainer<double> trainer(setup.field, setup.data, setup.lut, setup.spec, setup.cfg);
  // Run a couple of phase-2 steps so Adam moments are nonzero.
  trainer.train_step(5);
  trainer.train_step(6);
  const TensorInfo& rw = setup.field.params.find("rough_w");
  const TensorInfo& rb = setup.field.params.find("rough_b");
  const VecX<double> before_w =
      setup.field.params.flat.segment(rw.offset, std::ptrdiff_t(rw.rows) * rw.cols);
  const VecX<double> before_b = setup.field.params.flat.segment(rb.offset, rb.rows);
  trainer.train_step(9);  // phase 3
  const VecX<double> after_w =
      setup.field.params.flat.segment(rw.offset, std::ptrdiff_t(rw.rows) * rw.cols);
  const VecX<double> after_b = setup.field.params.flat.segment(rb.offset, rb.rows);
  CHECK((before_w.array() == after_w.array()).all());
  CHECK((before_b.array() == after_b.array()).all());
  // Other tensors did move.
  const TensorInfo& aw = setup.field.params.find("albedo_w");
  const VecX<double> moved =
      setup.field.params.flat.segment(aw.offset, std::ptrdiff_t(aw.rows) * aw.cols);
  CHECK(moved.size() > 0);
}

TEST_CASE("zero loss leaves parameters unchanged on the first step") {
  GradSetup setup;
  // Targets exactly equal to the current forward outputs => zero residual.
  const BatchSnapshot<double> snap0 = make_snapshot<double>(setup.field, setup.data, setup.cfg, 0);
  BatchSnapshot<double> snap = snap0;
  VecX<double> grad = VecX<double>::Zero(setup.field.params.flat.size());
  // Evaluate the forward outputs and rewrite targets to match them.
  // Phase 1: only pref targets matter.
  const FieldConfig& fc = setup.field.params.config;
  for (auto& ray : snap.rays) {
    const RaySamples<double> samples =
        stratified_samples<double>(ray.t_near, ray.t_far, setup.cfg.n_primary, ray.jitter);
    Mat3X<double> xs(3, setup.cfg.n_primary);
    for (int i = 0; i < setup.cfg.n_primary; ++i) xs.col(i) = ray.origin + samples.t(i) * ray.dir;
    PointBatch<double> pb;
    setup.field.eval_points(xs, pb);
    LevelsBatch<double> lv;
    setup.field.eval_levels(pb.feature, ray.dir, lv);
    const auto out = volume_accumulate<double>(samples, pb, &lv);
    for (int j = 0; j < fc.levels; ++j) ray.pref_targets[size_t(j)] = out.levels[size_t(j)];
  }
  const StepResult<double> res =
      forward_backward<double>(setup.field.params, setup.field.bounds_min, setup.field.bounds_max,
                               snap, setup.lut, setup.spec, setup.cfg, &grad);
  CHECK(res.total < 1e-20);
  CHECK(grad.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("trainer is deterministic per seed") {
  GradSetup a, b;
  a.cfg.schedule.total_steps = 10;
  b.cfg.schedule.total_steps = 10;
  Trainer<double> ta(a.field, a.data, a.lut, a.spec, a.cfg);
  Trainer<double> tb(b.field, b.data, b.lut, b.spec, b.cfg);
  for (int s = 0; s < 10; ++s) {
    ta.train_step(s);
    tb.train_step(s);
  }
  CHECK((a.field.params.flat.array() == b.field.params.flat.array()).all());
}

TEST_CASE("adam masked step leaves frozen entries untouched") {
  Adam<double> adam;
  VecX<double> params = VecX<double>::LinSpaced(6, 0.0, 1.0);
  const VecX<double> before = params;
  VecX<double> grad = VecX<double>::Ones(6);
  VecX<double> mask = VecX<double>::Ones(6);
  mask(2) = 0;
  mask(3) = 0;
  adam.step(params, grad, 1e-2, &mask);
  CHECK(params(2) == before(2));
  CHECK(params(3) == before(3));
  CHECK(params(0) != before(0));
}
