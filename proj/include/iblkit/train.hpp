// Copyright (c) 2026 The iblkit Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>

#include "iblkit/camera.hpp"
#include "iblkit/field.hpp"
#include "iblkit/image.hpp"
#include "iblkit/lut.hpp"
#include "iblkit/prefilter.hpp"
#include "iblkit/shade.hpp"

namespace iblkit {

// ---------------------------------------------------------------------------
// Losses

template <typename S>
S loss_render(const Mat3X<S>& pred, const Mat3X<S>& target) {
  if (pred.cols() != target.cols()) throw std::invalid_argument("loss_render: batch mismatch");
  if (!pred.allFinite() || !target.allFinite())
    throw std::runtime_error("loss_render: non-finite inputs");
  return (pred - target).colwise().squaredNorm().mean();
}

template <typename S>
S loss_pref(const std::vector<Mat3X<S>>& pred_levels, const std::vector<Mat3X<S>>& targets) {
  if (pred_levels.size() != targets.size())
    throw std::invalid_argument("loss_pref: level count mismatch");
  S total = S(0);
  for (size_t j = 0; j < pred_levels.size(); ++j)
    total += loss_render<S>(pred_levels[j], targets[j]);
  return total;
}

template <typename S>
S loss_prior(const Mat3X<S>& albedo, const Mat3X<S>& pseudo_albedo) {
  return loss_render<S>(albedo, pseudo_albedo);
}

template <typename S>
S loss_ireg(const RowX<S>& irr, S mean_irr) {
  return (irr.array() - mean_irr).square().mean();
}

template <typename S>
struct LossParts {
  S render = S(0), pref = S(0), prior = S(0), ireg = S(0);
};

// Phase 1 optimizes the prefiltered rendering loss only; phase 2 adds the
// approximated-radiance loss; phase 3 adds both priors.
template <typename S>
S total_loss(const LossParts<S>& parts, S lambda_ireg, int phase) {
  if (phase <= 1) return parts.pref;
  if (phase == 2) return parts.pref + parts.render;
  return parts.render + parts.pref + parts.prior + lambda_ireg * parts.ireg;
}

// ---------------------------------------------------------------------------
// Schedule and optimizer

struct Schedule {
  int total_steps = 5000;
  int phase1_end = 500;
  int phase2_end = 4000;
  int batch_rays = 192;
  double lr_start = 5e-4;
  double lr_end = 5e-5;

  void validate() const {
    if (total_steps < 0 || phase1_end < 0) throw std::invalid_argument("Schedule: negative steps");
    if (total_steps > 0 && !(phase1_end < phase2_end && phase2_end < total_steps) &&
        !(phase1_end <= phase2_end && phase2_end <= total_steps))
      throw std::invalid_argument("Schedule: need phase1_end <= phase2_end <= total_steps");
  }

  int phase_of(int step) const {
    if (step < phase1_end) return 1;
    if (step < phase2_end) return 2;
    return 3;
  }

  double lr_at(int step) const {
    if (total_steps <= 1) return lr_start;
    const double t = double(step) / double(total_steps - 1);
    return lr_start * std::pow(lr_end / lr_start, t);
  }
};

template <typename S>
struct Adam {
  VecX<S> m, v;
  int t = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  // Frozen entries (mask == 0) keep parameters and moments untouched.
  void step(VecX<S>& params, const VecX<S>& grad, double lr, const VecX<S>* mask = nullptr) {
    if (m.size() != params.size()) {
      m = VecX<S>::Zero(params.size());
      v = VecX<S>::Zero(params.size());
    }
    ++t;
    const S b1 = S(beta1), b2 = S(beta2);
    const S corr1 = S(1) - std::pow(b1, S(t));
    const S corr2 = S(1) - std::pow(b2, S(t));
    for (Eigen::Index i = 0; i < params.size(); ++i) {
      if (mask && (*mask)(i) == S(0)) continue;
      m(i) = b1 * m(i) + (S(1) - b1) * grad(i);
      v(i) = b2 * v(i) + (S(1) - b2) * grad(i) * grad(i);
      const S mh = m(i) / corr1;
      const S vh = v(i) / corr2;
      params(i) -= S(lr) * mh / (std::sqrt(vh) + S(eps));
    }
  }
};

// ---------------------------------------------------------------------------
// Backward passes for the shared forward blocks

// d/dx of softplus expressed through the output: sigmoid(x) = 1 - exp(-y).
template <typename S>
MatX<S> softplus_grad_from_output(const MatX<S>& y) {
  return (S(1) - (-y.array()).exp()).matrix();
}

template <typename S>
MatX<S> sigmoid_grad_from_output(const MatX<S>& y) {
  return (y.array() * (S(1) - y.array())).matrix();
}

template <typename S>
struct HeadGrads {
  RowX<S> sigma, irr, rough;  // dL/d(head output)
  Mat3X<S> albedo;
  MatX<S> feature;  // dL/d(trunk output), e.g. from the direction MLP
};

template <typename S>
void accumulate(VecX<S>& grad_flat, const TensorInfo& info, const MatX<S>& g) {
  Eigen::Map<MatX<S>>(grad_flat.data() + info.offset, info.rows, info.cols) += g;
}

// Reverse pass of trunk_forward. Accumulates parameter gradients into
// grad_flat (laid out like FieldParams::flat).
template <typename S>
void trunk_backward(const FieldParams<S>& params, const TrunkCache<S>& cache,
                    const HeadGrads<S>& up, VecX<S>& grad_flat) {
  const FieldConfig& c = params.config;
  const MatX<S>& a_last = cache.act[size_t(c.trunk_depth - 1)];
  MatX<S> d_a = up.feature.size() ? up.feature : MatX<S>::Zero(a_last.rows(), a_last.cols());

  auto head_back = [&](const char* wn, const char* bn, const MatX<S>& dz) {
    accumulate<S>(grad_flat, params.find(wn), dz * a_last.transpose());
    accumulate<S>(grad_flat, params.find(bn), dz.rowwise().sum());
    d_a.noalias() += params.tensor(wn).transpose() * dz;
  };
  if (up.sigma.size()) {
    const MatX<S> dz = up.sigma.cwiseProduct(softplus_grad_from_output<S>(cache.heads.sigma));
    head_back("sigma_w", "sigma_b", dz);
  }
  if (up.irr.size()) {
    const MatX<S> dz = up.irr.cwiseProduct(softplus_grad_from_output<S>(cache.heads.irr));
    head_back("irr_w", "irr_b", dz);
  }
  if (up.rough.size()) {
    const MatX<S> dz = up.rough.cwiseProduct(sigmoid_grad_from_output<S>(cache.heads.rough));
    head_back("rough_w", "rough_b", dz);
  }
  if (up.albedo.size()) {
    const MatX<S> dz = up.albedo.cwiseProduct(sigmoid_grad_from_output<S>(cache.heads.albedo));
    head_back("albedo_w", "albedo_b", dz);
  }

  for (int l = c.trunk_depth - 1; l >= 0; --l) {
    const std::string ls = std::to_string(l);
    const MatX<S>& a_l = cache.act[size_t(l)];
    MatX<S> dz = d_a.cwiseProduct((a_l.array() > S(0)).template cast<S>().matrix());
    MatX<S> in;
    if (l == 0)
      in = cache.encoded;
    else if (l == c.skip_layer) {
      const MatX<S>& prev = cache.act[size_t(l - 1)];
      in.resize(prev.rows() + cache.encoded.rows(), prev.cols());
      in.topRows(prev.rows()) = prev;
      in.bottomRows(cache.encoded.rows()) = cache.encoded;
    } else
      in = cache.act[size_t(l - 1)];
    accumulate<S>(grad_flat, params.find("trunk_w" + ls), dz * in.transpose());
    accumulate<S>(grad_flat, params.find("trunk_b" + ls), dz.rowwise().sum());
    if (l == 0) break;
    const MatX<S> d_in = params.tensor("trunk_w" + ls).transpose() * dz;
    d_a = (l == c.skip_layer) ? MatX<S>(d_in.topRows(cache.act[size_t(l - 1)].rows())) : d_in;
  }
}

// Reverse pass of dir_forward; returns the gradient with respect to the
// trunk features (top rows of the direction-MLP input).
template <typename S>
MatX<S> dir_backward(const FieldParams<S>& params, const DirCache<S>& cache,
                     const std::vector<Mat3X<S>>& level_grads, VecX<S>& grad_flat) {
  const FieldConfig& c = params.config;
  MatX<S> d_hidden = MatX<S>::Zero(cache.hidden.rows(), cache.hidden.cols());
  for (int j = 0; j < c.levels; ++j) {
    if (!level_grads[size_t(j)].size()) continue;
    const std::string js = std::to_string(j);
    const MatX<S> dz = level_grads[size_t(j)].cwiseProduct(
        sigmoid_grad_from_output<S>(cache.out.level[size_t(j)]));
    accumulate<S>(grad_flat, params.find("level_w" + js), dz * cache.hidden.transpose());
    accumulate<S>(grad_flat, params.find("level_b" + js), dz.rowwise().sum());
    d_hidden.noalias() += params.tensor("level_w" + js).transpose() * dz;
  }
  const MatX<S> dz = d_hidden.cwiseProduct((cache.hidden.array() > S(0)).template cast<S>().matrix());
  accumulate<S>(grad_flat, params.find("dir_w"), dz * cache.input.transpose());
  accumulate<S>(grad_flat, params.find("dir_b"), dz.rowwise().sum());
  const MatX<S> d_input = params.tensor("dir_w").transpose() * dz;
  return d_input.topRows(c.trunk_width);
}

// Reverse pass of volume_weights/accumulate for one ray: converts gradients
// of accumulated quantities into gradients of per-sample sigma. g_w must
// already hold dL/dw_i from all value terms (and the depth term).
template <typename S>
void volume_backward_sigma(const RowX<S>& sigma, const VecX<S>& delta, const VecX<S>& weights,
                           S t_far_trans, const VecX<S>& g_w, S g_t_far, RowX<S>& d_sigma) {
  const int n = int(sigma.size());
  d_sigma.resize(n);
  // T_{i+1} = T_i exp(-sigma_i delta_i); running product forward.
  VecX<S> trans_next(n);
  S trans = S(1);
  for (int i = 0; i < n; ++i) {
    trans *= std::exp(-sigma(i) * delta(i));
    trans_next(i) = trans;
  }
  S suffix = S(0);  // sum_{i>j} g_w_i w_i
  for (int j = n - 1; j >= 0; --j) {
    d_sigma(j) = delta(j) * (g_w(j) * trans_next(j) - suffix - g_t_far * t_far_trans);
    suffix += g_w(j) * weights(j);
  }
}

// ---------------------------------------------------------------------------
// Training step: frozen geometry snapshot + differentiable pass

struct TrainConfig {
  Schedule schedule;
  int n_primary = 48;
  int n_secondary = 24;
  double lambda_ireg = 0.1;
  std::uint64_t seed = 0;
  double normal_step = 1e-2;
  ShadeOptions shade;
  bool deterministic = true;
};

// Everything the differentiable pass consumes that must not move under
// parameter perturbation: ray geometry, sample jitters, frozen surface
// geometry, and the per-ray targets.
template <typename S>
struct RaySnapshot {
  Vec3<S> origin, dir;
  S t_near, t_far;
  VecX<S> jitter;
  Rgb<S> target = Rgb<S>::Zero();
  std::vector<Rgb<S>> pref_targets;
  Rgb<S> albedo_prior = Rgb<S>::Zero();
  bool hit = false;
  Vec3<S> normal = Vec3<S>::UnitZ();
  Vec3<S> omega_r = Vec3<S>::UnitZ();
  Vec3<S> x_surf = Vec3<S>::Zero();
  VecX<S> sec_jitter;
  S sec_t_exit = S(0);
};

template <typename S>
struct BatchSnapshot {
  std::vector<RaySnapshot<S>> rays;
  int phase = 1;
  S mean_irr = S(0);
  bool has_priors = false;
};

// Training views with precomputed Gaussian-blurred targets and optional
// pseudo priors.
struct TrainView {
  Camera camera;
  std::vector<Image> blurred;  // per level; level 0 is the input image
  std::optional<Image> albedo_prior;
  std::optional<Image> irr_prior;
};

struct TrainData {
  std::vector<TrainView> views;
  double mean_irr = 0.0;
  bool has_priors = false;
};

template <typename S>
BatchSnapshot<S> make_snapshot(const MlpField<S>& field, const TrainData& data,
                               const TrainConfig& cfg, int step) {
  const int phase = cfg.schedule.phase_of(step);
  BatchSnapshot<S> snap;
  snap.phase = phase;
  snap.mean_irr = S(data.mean_irr);
  snap.has_priors = data.has_priors;
  snap.rays.resize(size_t(cfg.schedule.batch_rays));
  const int levels = field.level_count();

  parallel_for(cfg.schedule.batch_rays, [&](std::int64_t r) {
    Prng rng(cfg.seed, std::uint64_t(step) << 20, std::uint64_t(r));
    RaySnapshot<S>& ray = snap.rays[size_t(r)];
    const auto& view = data.views[rng.next_u64() % data.views.size()];
    const int px = int(rng.next_u64() % std::uint64_t(view.camera.width));
    const int py = int(rng.next_u64() % std::uint64_t(view.camera.height));
    ray.origin = view.camera.position().cast<S>();
    ray.dir = view.camera.pixel_direction(px, py).cast<S>();
    ray.t_near = S(view.camera.t_near);
    ray.t_far = S(view.camera.t_far);
    ray.jitter = uniform_jitter<S>(cfg.n_primary, rng);
    ray.target = view.blurred[0].rgb(py, px).cast<S>();
    ray.pref_targets.resize(size_t(levels));
    for (int j = 0; j < levels; ++j)
      ray.pref_targets[size_t(j)] = view.blurred[size_t(j)].rgb(py, px).cast<S>();
    if (view.albedo_prior) ray.albedo_prior = view.albedo_prior->rgb(py, px).cast<S>();

    if (phase >= 2) {
      // Frozen surface geometry from a density-only march plus probe casts.
      const RaySamples<S> samples =
          stratified_samples<S>(ray.t_near, ray.t_far, cfg.n_primary, ray.jitter);
      Mat3X<S> xs(3, cfg.n_primary);
      for (int i = 0; i < cfg.n_primary; ++i) xs.col(i) = ray.origin + samples.t(i) * ray.dir;
      const RowX<S> sigma = field.eval_sigma(xs);
      VecX<S> w;
      S t_far_trans;
      volume_weights<S>(sigma, samples.delta, w, t_far_trans);
      ray.hit = (S(1) - t_far_trans) >= S(cfg.shade.hit_threshold);
      if (ray.hit) {
        const S depth = samples.t.dot(w);
        const auto nres = surface_normal<S>(field, ray.origin, ray.dir, ray.t_near, ray.t_far,
                                            cfg.n_primary, ray.jitter, S(cfg.normal_step));
        ray.normal = nres.normal;
        ray.omega_r = reflect<S>(Vec3<S>(-ray.dir), ray.normal).normalized();
        ray.x_surf = ray.origin + depth * ray.dir + S(1e-3) * ray.omega_r;
        ray.sec_jitter = uniform_jitter<S>(cfg.n_secondary, rng);
        ray.sec_t_exit =
            ray_box_exit<S>(ray.x_surf, ray.omega_r, field.bounds_min, field.bounds_max);
        if (!(ray.sec_t_exit > S(0))) ray.hit = false;
      }
    }
  });
  return snap;
}

template <typename S>
struct StepResult {
  LossParts<S> parts;
  S total = S(0);
  bool finite = true;
};

// Differentiable forward (and optional backward) against a frozen snapshot.
// Pure in (params, snapshot): suitable for finite-difference checks.
template <typename S>
StepResult<S> forward_backward(const FieldParams<S>& params, const Vec3<S>& bounds_min,
                               const Vec3<S>& bounds_max, const BatchSnapshot<S>& snap,
                               const BrdfLut& lut, const PrefilterSpec& spec,
                               const TrainConfig& cfg, VecX<S>* grad_out) {
  const FieldConfig& fc = params.config;
  const int batch = int(snap.rays.size());
  const int ns = cfg.n_primary, nr = cfg.n_secondary;
  const int levels = fc.levels;
  const int phase = snap.phase;
  const bool want_render = phase >= 2;
  const bool want_priors = phase >= 3 && snap.has_priors;
  const S inv_b = S(1) / S(batch);

  const Vec3<S> center = (bounds_min + bounds_max) / S(2);
  const Vec3<S> half = (bounds_max - bounds_min) / S(2);
  auto encode_positions = [&](const Mat3X<S>& xs) {
    const Mat3X<S> norm = (xs.colwise() - center).array().colwise() / half.array();
    return positional_encoding<S>(MatX<S>(norm), fc.pos_encoding_order);
  };

  // ---- Primary pass (all rays), one batched forward --------------------
  Mat3X<S> prim_xs(3, batch * ns);
  MatX<S> prim_denc(fc.dir_in(), batch * ns);
  std::vector<RaySamples<S>> prim_samples;
  prim_samples.resize(size_t(batch));
  for (int r = 0; r < batch; ++r) {
    const RaySnapshot<S>& ray = snap.rays[size_t(r)];
    prim_samples[size_t(r)] = stratified_samples<S>(ray.t_near, ray.t_far, ns, ray.jitter);
    const MatX<S> denc = positional_encoding<S>(MatX<S>(ray.dir), fc.dir_encoding_order);
    for (int i = 0; i < ns; ++i) {
      prim_xs.col(r * ns + i) = ray.origin + prim_samples[size_t(r)].t(i) * ray.dir;
      prim_denc.col(r * ns + i) = denc.col(0);
    }
  }
  TrunkCache<S> prim_cache;
  PointBatch<S> prim_pb;
  trunk_forward<S>(params, encode_positions(prim_xs), prim_pb, grad_out ? &prim_cache : nullptr);
  MatX<S> prim_dir_in(fc.trunk_width + fc.dir_in(), batch * ns);
  prim_dir_in.topRows(fc.trunk_width) = prim_pb.feature;
  prim_dir_in.bottomRows(fc.dir_in()) = prim_denc;
  DirCache<S> prim_dcache;
  LevelsBatch<S> prim_lv;
  dir_forward<S>(params, prim_dir_in, prim_lv, grad_out ? &prim_dcache : nullptr);

  // ---- Secondary pass (hit rays) ----------------------------------------
  std::vector<int> sec_of_ray(size_t(batch), -1);
  int n_hit = 0;
  if (want_render)
    for (int r = 0; r < batch; ++r)
      if (snap.rays[size_t(r)].hit) sec_of_ray[size_t(r)] = n_hit++;

  Mat3X<S> sec_xs(3, n_hit * nr);
  MatX<S> sec_denc(fc.dir_in(), n_hit * nr);
  std::vector<RaySamples<S>> sec_samples;
  sec_samples.resize(size_t(n_hit));
  for (int r = 0; r < batch; ++r) {
    const int s = sec_of_ray[size_t(r)];
    if (s < 0) continue;
    const RaySnapshot<S>& ray = snap.rays[size_t(r)];
    sec_samples[size_t(s)] =
        stratified_samples<S>(S(0), ray.sec_t_exit, nr, ray.sec_jitter);
    const MatX<S> denc = positional_encoding<S>(MatX<S>(ray.omega_r), fc.dir_encoding_order);
    for (int i = 0; i < nr; ++i) {
      sec_xs.col(s * nr + i) = ray.x_surf + sec_samples[size_t(s)].t(i) * ray.omega_r;
      sec_denc.col(s * nr + i) = denc.col(0);
    }
  }
  TrunkCache<S> sec_cache;
  PointBatch<S> sec_pb;
  DirCache<S> sec_dcache;
  LevelsBatch<S> sec_lv;
  MatX<S> sec_dir_in;
  if (n_hit > 0) {
    trunk_forward<S>(params, encode_positions(sec_xs), sec_pb, grad_out ? &sec_cache : nullptr);
    sec_dir_in.resize(fc.trunk_width + fc.dir_in(), n_hit * nr);
    sec_dir_in.topRows(fc.trunk_width) = sec_pb.feature;
    sec_dir_in.bottomRows(fc.dir_in()) = sec_denc;
    dir_forward<S>(params, sec_dir_in, sec_lv, grad_out ? &sec_dcache : nullptr);
  }

  // ---- Per-ray accumulation and Eq. 2 assembly ---------------------------
  struct RayFwd {
    VecX<S> w;
    S t_far_trans;
    Rgb<S> albedo;
    S irr, rough, depth;
    std::vector<Rgb<S>> lv;
    // secondary
    VecX<S> sec_w;
    S sec_t_far, d_reflect;
    std::vector<Rgb<S>> sec_lv;
    bool escaped = true;
    Rgb<S> out = Rgb<S>::Zero();
  };
  std::vector<RayFwd> fwd;
  fwd.resize(size_t(batch));
  LossParts<S> parts;

  for (int r = 0; r < batch; ++r) {
    const RaySnapshot<S>& ray = snap.rays[size_t(r)];
    RayFwd& f = fwd[size_t(r)];
    const auto seg = Eigen::seqN(r * ns, ns);
    volume_weights<S>(RowX<S>(prim_pb.sigma(seg)), prim_samples[size_t(r)].delta, f.w,
                      f.t_far_trans);
    f.albedo = (prim_pb.albedo(Eigen::all, seg) * f.w).array();
    f.irr = RowX<S>(prim_pb.irr(seg)).dot(f.w.transpose());
    f.rough = RowX<S>(prim_pb.rough(seg)).dot(f.w.transpose());
    f.depth = prim_samples[size_t(r)].t.dot(f.w);
    f.lv.resize(size_t(levels));
    for (int j = 0; j < levels; ++j) {
      f.lv[size_t(j)] = (prim_lv.level[size_t(j)](Eigen::all, seg) * f.w).array();
      parts.pref += (f.lv[size_t(j)] - ray.pref_targets[size_t(j)]).square().sum() * inv_b;
    }

    if (!want_render) continue;
    const int s = sec_of_ray[size_t(r)];
    if (s < 0) {
      f.out = f.t_far_trans * cfg.shade.background.cast<S>();
    } else {
      const auto sseg = Eigen::seqN(s * nr, nr);
      volume_weights<S>(RowX<S>(sec_pb.sigma(sseg)), sec_samples[size_t(s)].delta, f.sec_w,
                        f.sec_t_far);
      f.d_reflect = sec_samples[size_t(s)].t.dot(f.sec_w);
      f.sec_lv.resize(size_t(levels));
      for (int j = 0; j < levels; ++j)
        f.sec_lv[size_t(j)] = (sec_lv.level[size_t(j)](Eigen::all, sseg) * f.sec_w).array();
      f.escaped = f.sec_t_far > S(0.5);

      PixelBuffers<S> px;
      px.hit = true;
      px.albedo = f.albedo;
      px.irr = f.irr;
      px.rough = f.rough;
      px.normal = ray.normal;
      px.dir = ray.dir;
      px.levels = f.sec_lv;
      px.d_reflect = f.d_reflect;
      px.escaped = f.escaped;
      f.out = shade_pixel<S>(px, lut, spec, cfg.shade);
    }
    parts.render += (f.out - ray.target).square().sum() * inv_b;
    if (want_priors) {
      parts.prior += (f.albedo - ray.albedo_prior).square().sum() * inv_b;
      parts.ireg += (f.irr - snap.mean_irr) * (f.irr - snap.mean_irr) * inv_b;
    }
  }

  StepResult<S> res;
  res.parts = parts;
  res.total = total_loss<S>(parts, S(cfg.lambda_ireg), phase);
  res.finite = std::isfinite(double(res.total));
  if (!grad_out || !res.finite) return res;

  // ---- Backward -----------------------------------------------------------
  HeadGrads<S> prim_up;
  prim_up.sigma = RowX<S>::Zero(batch * ns);
  prim_up.feature = MatX<S>::Zero(fc.trunk_width, batch * ns);
  std::vector<Mat3X<S>> prim_lv_up(size_t(levels), Mat3X<S>::Zero(3, batch * ns));
  HeadGrads<S> sec_up;
  std::vector<Mat3X<S>> sec_lv_up;
  sec_lv_up.resize(size_t(levels));
  if (want_render) {
    prim_up.irr = RowX<S>::Zero(batch * ns);
    prim_up.rough = RowX<S>::Zero(batch * ns);
    prim_up.albedo = Mat3X<S>::Zero(3, batch * ns);
    if (n_hit > 0) {
      sec_up.sigma = RowX<S>::Zero(n_hit * nr);
      sec_up.feature = MatX<S>::Zero(fc.trunk_width, n_hit * nr);
      for (auto& g : sec_lv_up) g = Mat3X<S>::Zero(3, n_hit * nr);
    }
  }

  for (int r = 0; r < batch; ++r) {
    const RaySnapshot<S>& ray = snap.rays[size_t(r)];
    const RayFwd& f = fwd[size_t(r)];
    const auto seg = Eigen::seqN(r * ns, ns);

    // dL/d(accumulated quantities)
    Rgb<S> g_albedo = Rgb<S>::Zero();
    S g_irr = S(0), g_rough = S(0), g_dref = S(0), g_tfar = S(0);
    std::vector<Rgb<S>> g_lv;
    g_lv.resize(size_t(levels));
    for (int j = 0; j < levels; ++j)
      g_lv[size_t(j)] = S(2) * (f.lv[size_t(j)] - ray.pref_targets[size_t(j)]) * inv_b;
    std::vector<Rgb<S>> g_sec_lv(size_t(levels), Rgb<S>::Zero());

    const int s = want_render ? sec_of_ray[size_t(r)] : -1;
    if (want_render) {
      const Rgb<S> g_out = S(2) * (f.out - ray.target) * inv_b;
      if (s < 0) {
        g_tfar += (g_out * cfg.shade.background.cast<S>()).sum();
      } else {
        // Assembly backward (mirror of shade_pixel).
        const Vec3<S> wo = -ray.dir;
        const S mu = clamp01(S(ray.normal.dot(wo)));
        const S gamma = clamp01(f.rough);
        const S q0 = S(1) - mu;
        const S q2 = q0 * q0;
        const S q = q2 * q2 * q0;
        const bool mfr = cfg.shade.metallic_from_roughness;
        const S metallic = mfr ? S(1) - gamma : S(0);
        const Rgb<S> f0 = Rgb<S>::Constant(S(0.04)) + (f.albedo - S(0.04)) * metallic;
        const Rgb<S> cap = f0.max(Rgb<S>::Constant(S(1) - gamma));
        const Rgb<S> fg = f0 + (cap - f0) * q;

        S gamma_ref = gamma;
        bool used_depth = false;
        if (cfg.shade.depth_normalize && !f.escaped && f.d_reflect > S(0)) {
          gamma_ref = clamp01(gamma * f.d_reflect / S(spec.d0));
          used_depth = true;
        }
        Eigen::Array<S, Eigen::Dynamic, 1> dw;
        const auto wgt = interp_weights<S>(gamma_ref, spec, &dw);
        Rgb<S> pref = Rgb<S>::Zero();
        for (int j = 0; j < levels; ++j) pref += S(wgt(j)) * f.sec_lv[size_t(j)];
        Vec2<S> sb, sb_dg;
        fetch_with_grad<S>(lut, mu, gamma, sb, sb_dg);
        const Rgb<S> specf = f0 * sb(0) + sb(1);

        // d(out)/d inputs
        const Rgb<S> g_spec = g_out;
        const Rgb<S> g_pref = g_spec * specf;
        const Rgb<S> g_specf = g_spec * pref;
        Rgb<S> g_f0 = g_specf * sb(0);
        g_rough += (g_specf * f0).sum() * sb_dg(0) + g_specf.sum() * sb_dg(1);

        S g_gref = S(0);
        for (int j = 0; j < levels; ++j) {
          g_sec_lv[size_t(j)] += g_pref * S(wgt(j));
          g_gref += S(dw(j)) * (g_pref * f.sec_lv[size_t(j)]).sum();
        }
        if (used_depth) {
          const S raw = gamma * f.d_reflect / S(spec.d0);
          if (raw > S(0) && raw < S(1)) {
            g_rough += g_gref * f.d_reflect / S(spec.d0);
            g_dref += g_gref * gamma / S(spec.d0);
          }
        } else {
          g_rough += g_gref;
        }

        // Diffuse term gamma (1 - Fg) albedo irr
        const Rgb<S> g_diff = g_out;
        g_rough += (g_diff * (S(1) - fg) * f.albedo).sum() * f.irr;
        const Rgb<S> g_fg = -g_diff * gamma * f.albedo * f.irr;
        g_albedo += g_diff * gamma * (S(1) - fg) * f.irr;
        g_irr += (g_diff * gamma * (S(1) - fg) * f.albedo).sum();

        // Fg backward: per channel, cap branch.
        Rgb<S> g_f0_from_fg = Rgb<S>::Zero();
        for (int ch = 0; ch < 3; ++ch) {
          if (S(1) - gamma > f0(ch)) {
            g_f0_from_fg(ch) = g_fg(ch) * (S(1) - q);
            g_rough += g_fg(ch) * (-q);
          } else {
            g_f0_from_fg(ch) = g_fg(ch);
          }
        }
        g_f0 += g_f0_from_fg;

        // F0 = 0.04 + (albedo - 0.04) metallic; metallic = 1 - gamma.
        g_albedo += g_f0 * metallic;
        if (mfr) g_rough += -(g_f0 * (f.albedo - S(0.04))).sum();
      }
      if (want_priors) {
        g_albedo += S(2) * (f.albedo - ray.albedo_prior) * inv_b;
        g_irr += S(cfg.lambda_ireg) * S(2) * (f.irr - snap.mean_irr) * inv_b;
      }
    }

    // Primary volume backward: value grads and sigma grads.
    VecX<S> g_w = VecX<S>::Zero(ns);
    for (int j = 0; j < levels; ++j) {
      const auto& lvj = prim_lv.level[size_t(j)];
      for (int i = 0; i < ns; ++i) {
        const int col = r * ns + i;
        prim_lv_up[size_t(j)].col(col) += f.w(i) * g_lv[size_t(j)].matrix();
        g_w(i) += g_lv[size_t(j)].matrix().dot(lvj.col(col));
      }
    }
    if (want_render) {
      for (int i = 0; i < ns; ++i) {
        const int col = r * ns + i;
        prim_up.albedo.col(col) += f.w(i) * g_albedo.matrix();
        prim_up.irr(col) += f.w(i) * g_irr;
        prim_up.rough(col) += f.w(i) * g_rough;
        g_w(i) += g_albedo.matrix().dot(prim_pb.albedo.col(col)) + g_irr * prim_pb.irr(col) +
                  g_rough * prim_pb.rough(col);
      }
    }
    RowX<S> d_sigma;
    volume_backward_sigma<S>(RowX<S>(prim_pb.sigma(seg)), prim_samples[size_t(r)].delta, f.w,
                             f.t_far_trans, g_w, g_tfar, d_sigma);
    prim_up.sigma(seg) += d_sigma;

    // Secondary volume backward.
    if (want_render && s >= 0) {
      VecX<S> g_sw = VecX<S>::Zero(nr);
      for (int j = 0; j < levels; ++j) {
        const auto& lvj = sec_lv.level[size_t(j)];
        for (int i = 0; i < nr; ++i) {
          const int col = s * nr + i;
          sec_lv_up[size_t(j)].col(col) += f.sec_w(i) * g_sec_lv[size_t(j)].matrix();
          g_sw(i) += g_sec_lv[size_t(j)].matrix().dot(lvj.col(col));
        }
      }
      for (int i = 0; i < nr; ++i) g_sw(i) += g_dref * sec_samples[size_t(s)].t(i);
      RowX<S> d_ssigma;
      volume_backward_sigma<S>(RowX<S>(sec_pb.sigma(Eigen::seqN(s * nr, nr))),
                               sec_samples[size_t(s)].delta, f.sec_w, f.sec_t_far, g_sw, S(0),
                               d_ssigma);
      sec_up.sigma(Eigen::seqN(s * nr, nr)) += d_ssigma;
    }
  }

  // MLP backward passes.
  prim_up.feature += dir_backward<S>(params, prim_dcache, prim_lv_up, *grad_out);
  trunk_backward<S>(params, prim_cache, prim_up, *grad_out);
  if (want_render && n_hit > 0) {
    sec_up.feature += dir_backward<S>(params, sec_dcache, sec_lv_up, *grad_out);
    trunk_backward<S>(params, sec_cache, sec_up, *grad_out);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Trainer

template <typename S>
struct StepStats {
  int step = 0;
  int phase = 1;
  LossParts<S> parts;
  S total = S(0);
  double wall_ms = 0;
  bool skipped = false;
};

template <typename S>
class Trainer {
 public:
  Trainer(MlpField<S>& field, TrainData data, const BrdfLut& lut, PrefilterSpec spec,
          TrainConfig cfg)
      : field_(field), data_(std::move(data)), lut_(lut), spec_(std::move(spec)), cfg_(cfg) {
    cfg_.schedule.validate();
    if (data_.views.empty()) throw std::invalid_argument("Trainer: empty dataset");
    mask_ = VecX<S>::Ones(field_.params.flat.size());
  }

  std::uint64_t skipped_steps() const { return skipped_; }

  StepStats<S> train_step(int step) {
    const auto t0 = std::chrono::steady_clock::now();
    const int phase = cfg_.schedule.phase_of(step);
    if (phase == 3 && !data_.has_priors)
      throw std::runtime_error("train: phase 3 requires prior images");
    const BatchSnapshot<S> snap = make_snapshot<S>(field_, data_, cfg_, step);
    VecX<S> grad = VecX<S>::Zero(field_.params.flat.size());
    const StepResult<S> res = forward_backward<S>(field_.params, field_.bounds_min,
                                                  field_.bounds_max, snap, lut_, spec_, cfg_,
                                                  &grad);
    StepStats<S> stats;
    stats.step = step;
    stats.phase = phase;
    stats.parts = res.parts;
    stats.total = res.total;
    if (!res.finite || !grad.allFinite()) {
      ++skipped_;
      stats.skipped = true;
    } else {
      const VecX<S>* mask = nullptr;
      if (phase >= 3) {
        set_mask("rough_w", S(0));
        set_mask("rough_b", S(0));
        mask = &mask_;
      }
      adam_.step(field_.params.flat, grad, cfg_.schedule.lr_at(step), mask);
    }
    stats.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return stats;
  }

  template <typename Callback>
  std::vector<StepStats<S>> run(Callback&& on_step) {
    std::vector<StepStats<S>> log;
    log.reserve(size_t(cfg_.schedule.total_steps));
    for (int step = 0; step < cfg_.schedule.total_steps; ++step) {
      log.push_back(train_step(step));
      on_step(log.back());
    }
    return log;
  }

 private:
  void set_mask(const std::string& name, S value) {
    const TensorInfo& info = field_.params.find(name);
    mask_.segment(info.offset, std::ptrdiff_t(info.rows) * info.cols).setConstant(value);
  }

  MlpField<S>& field_;
  TrainData data_;
  const BrdfLut& lut_;
  PrefilterSpec spec_;
  TrainConfig cfg_;
  Adam<S> adam_;
  VecX<S> mask_;
  std::uint64_t skipped_ = 0;
};

}  // namespace iblkit
