// Copyright (c) 2026 The iblkit Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <vector>

#include "iblkit/common.hpp"

namespace iblkit {

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using RowX = Eigen::Matrix<S, 1, Eigen::Dynamic>;
template <typename S>
using Mat3X = Eigen::Matrix<S, 3, Eigen::Dynamic>;

// ---------------------------------------------------------------------------
// Positional encoding: raw v concatenated with sin/cos(2^k pi v), k < order.

template <typename S>
MatX<S> positional_encoding(const Eigen::Ref<const MatX<S>>& v, int order) {
  const int dim = int(v.rows());
  const int cols = int(v.cols());
  MatX<S> out(dim * (1 + 2 * order), cols);
  out.topRows(dim) = v;
  S freq = kPi<S>;
  for (int k = 0; k < order; ++k) {
    out.middleRows(dim * (1 + 2 * k), dim) = (v * freq).array().sin().matrix();
    out.middleRows(dim * (2 + 2 * k), dim) = (v * freq).array().cos().matrix();
    freq *= S(2);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Network configuration and parameters

struct FieldConfig {
  int pos_encoding_order = 10;
  int dir_encoding_order = 4;
  int trunk_depth = 8;
  int trunk_width = 256;
  int skip_layer = 4;  // encoding re-concatenated at the input of this layer
  int dir_hidden = 128;
  int levels = 4;

  int pos_in() const { return 3 * (1 + 2 * pos_encoding_order); }
  int dir_in() const { return 3 * (1 + 2 * dir_encoding_order); }
  int trunk_in(int layer) const {
    if (layer == 0) return pos_in();
    return layer == skip_layer ? trunk_width + pos_in() : trunk_width;
  }

  bool operator==(const FieldConfig&) const = default;
};

struct TensorInfo {
  std::string name;
  std::ptrdiff_t offset = 0;
  int rows = 0, cols = 0;
};

// All parameters live in one flat vector; tensors are mapped views in
// declaration order (the checkpoint order).
template <typename S>
struct FieldParams {
  FieldConfig config;
  std::vector<TensorInfo> layout;
  VecX<S> flat;

  static std::vector<TensorInfo> make_layout(const FieldConfig& c) {
    std::vector<TensorInfo> infos;
    std::ptrdiff_t off = 0;
    auto add = [&](const std::string& name, int rows, int cols) {
      infos.push_back({name, off, rows, cols});
      off += std::ptrdiff_t(rows) * cols;
    };
    for (int l = 0; l < c.trunk_depth; ++l) {
      add("trunk_w" + std::to_string(l), c.trunk_width, c.trunk_in(l));
      add("trunk_b" + std::to_string(l), c.trunk_width, 1);
    }
    add("sigma_w", 1, c.trunk_width);
    add("sigma_b", 1, 1);
    add("albedo_w", 3, c.trunk_width);
    add("albedo_b", 3, 1);
    add("irr_w", 1, c.trunk_width);
    add("irr_b", 1, 1);
    add("rough_w", 1, c.trunk_width);
    add("rough_b", 1, 1);
    add("dir_w", c.dir_hidden, c.trunk_width + c.dir_in());
    add("dir_b", c.dir_hidden, 1);
    for (int j = 0; j < c.levels; ++j) {
      add("level_w" + std::to_string(j), 3, c.dir_hidden);
      add("level_b" + std::to_string(j), 3, 1);
    }
    return infos;
  }

  static std::ptrdiff_t layout_size(const std::vector<TensorInfo>& infos) {
    return infos.empty() ? 0 : infos.back().offset + std::ptrdiff_t(infos.back().rows) * infos.back().cols;
  }

  static FieldParams zeros(const FieldConfig& c) {
    FieldParams p;
    p.config = c;
    p.layout = make_layout(c);
    p.flat = VecX<S>::Zero(layout_size(p.layout));
    return p;
  }

  // He-style uniform fan-in init, zero biases.
  static FieldParams init(const FieldConfig& c, std::uint64_t seed) {
    FieldParams p = zeros(c);
    Prng rng(seed);
    for (const TensorInfo& info : p.layout) {
      if (info.cols == 1) continue;  // bias
      const S limit = std::sqrt(S(6) / S(info.cols));
      auto t = p.tensor(info);
      for (int j = 0; j < info.cols; ++j)
        for (int i = 0; i < info.rows; ++i)
          t(i, j) = limit * (S(2) * rng.template uniform<S>() - S(1));
    }
    return p;
  }

  Eigen::Map<MatX<S>> tensor(const TensorInfo& info) {
    return {flat.data() + info.offset, info.rows, info.cols};
  }
  Eigen::Map<const MatX<S>> tensor(const TensorInfo& info) const {
    return {flat.data() + info.offset, info.rows, info.cols};
  }
  const TensorInfo& find(const std::string& name) const {
    for (const auto& info : layout)
      if (info.name == name) return info;
    throw std::invalid_argument("FieldParams: no tensor named " + name);
  }
  Eigen::Map<MatX<S>> tensor(const std::string& name) { return tensor(find(name)); }
  Eigen::Map<const MatX<S>> tensor(const std::string& name) const { return tensor(find(name)); }
};

// ---------------------------------------------------------------------------
// Activations

template <typename S>
MatX<S> softplus(const MatX<S>& x) {
  // log(1 + e^x), stable for both signs.
  return x.array().max(S(0)) + (-x.array().abs()).exp().log1p();
}

template <typename S>
MatX<S> sigmoid(const MatX<S>& x) {
  return (S(1) / (S(1) + (-x.array()).exp())).matrix();
}

// ---------------------------------------------------------------------------
// Batched evaluation with optional caches for the gradient engine

template <typename S>
struct PointBatch {
  RowX<S> sigma, irr, rough;
  Mat3X<S> albedo;
  MatX<S> feature;  // trunk output, one column per sample
};

template <typename S>
struct TrunkCache {
  MatX<S> encoded;                // network input
  std::vector<MatX<S>> act;      // post-ReLU activations per layer
  PointBatch<S> heads;           // head outputs (activation values)
};

template <typename S>
struct LevelsBatch {
  std::vector<Mat3X<S>> level;  // per level, 3 x B
};

template <typename S>
struct DirCache {
  MatX<S> input;   // [feature; encoded direction]
  MatX<S> hidden;  // post-ReLU
  LevelsBatch<S> out;
};

// Thread-safe tally of field evaluations; rendering increments these from
// worker threads.
struct EvalCounters {
  std::atomic<std::uint64_t> point_evals{0};  // appearance evaluations (position MLP)
  std::atomic<std::uint64_t> dir_evals{0};    // direction-head evaluations
  std::atomic<std::uint64_t> sigma_evals{0};  // density-only evaluations (normal probes)

  EvalCounters() = default;
  EvalCounters(const EvalCounters& o)
      : point_evals(o.point_evals.load()),
        dir_evals(o.dir_evals.load()),
        sigma_evals(o.sigma_evals.load()) {}
  EvalCounters& operator=(const EvalCounters& o) {
    point_evals.store(o.point_evals.load());
    dir_evals.store(o.dir_evals.load());
    sigma_evals.store(o.sigma_evals.load());
    return *this;
  }
};

// Position trunk + heads on an already-encoded input batch. Shared by the
// renderer and the gradient engine.
template <typename S>
void trunk_forward(const FieldParams<S>& params, const MatX<S>& encoded, PointBatch<S>& out,
                   TrunkCache<S>* cache = nullptr, bool sigma_only = false) {
  const FieldConfig& c = params.config;
  if (cache) {
    cache->act.assign(size_t(c.trunk_depth), {});
    cache->encoded = encoded;
  }
  MatX<S> a;
  for (int l = 0; l < c.trunk_depth; ++l) {
    const std::string ls = std::to_string(l);
    MatX<S> in;
    if (l == 0)
      in = encoded;
    else if (l == c.skip_layer) {
      in.resize(a.rows() + encoded.rows(), a.cols());
      in.topRows(a.rows()) = a;
      in.bottomRows(encoded.rows()) = encoded;
    } else
      in = std::move(a);
    a = ((params.tensor("trunk_w" + ls) * in).colwise() +
         VecX<S>(params.tensor("trunk_b" + ls).col(0)))
            .cwiseMax(S(0));
    if (cache) cache->act[size_t(l)] = a;
  }
  auto head = [&](const char* w, const char* b) {
    return MatX<S>((params.tensor(w) * a).colwise() + VecX<S>(params.tensor(b).col(0)));
  };
  out.sigma = softplus<S>(head("sigma_w", "sigma_b"));
  if (!sigma_only) {
    out.albedo = sigmoid<S>(head("albedo_w", "albedo_b"));
    out.irr = softplus<S>(head("irr_w", "irr_b"));
    out.rough = sigmoid<S>(head("rough_w", "rough_b"));
    out.feature = std::move(a);
  }
  if (cache) cache->heads = out;
}

// Direction MLP on a prepared [feature; encoded direction] input batch.
template <typename S>
void dir_forward(const FieldParams<S>& params, const MatX<S>& input, LevelsBatch<S>& out,
                 DirCache<S>* cache = nullptr) {
  const FieldConfig& c = params.config;
  MatX<S> hidden =
      ((params.tensor("dir_w") * input).colwise() + VecX<S>(params.tensor("dir_b").col(0)))
          .cwiseMax(S(0));
  out.level.resize(size_t(c.levels));
  for (int j = 0; j < c.levels; ++j) {
    const std::string js = std::to_string(j);
    out.level[size_t(j)] =
        sigmoid<S>((params.tensor("level_w" + js) * hidden).colwise() +
                   VecX<S>(params.tensor("level_b" + js).col(0)));
  }
  if (cache) {
    cache->input = input;
    cache->hidden = std::move(hidden);
    cache->out = out;
  }
}

// Neural field over a world-space axis-aligned box, normalized to [-1,1]^3.
template <typename S>
class MlpField {
 public:
  FieldParams<S> params;
  Vec3<S> bounds_min = Vec3<S>::Constant(S(-1));
  Vec3<S> bounds_max = Vec3<S>::Constant(S(1));
  mutable EvalCounters counters;

  MlpField() = default;
  MlpField(FieldParams<S> p, const Vec3<S>& bmin, const Vec3<S>& bmax)
      : params(std::move(p)), bounds_min(bmin), bounds_max(bmax) {}

  int level_count() const { return params.config.levels; }

  Mat3X<S> normalize(const Eigen::Ref<const Mat3X<S>>& xs) const {
    const Vec3<S> center = (bounds_min + bounds_max) / S(2);
    const Vec3<S> half = (bounds_max - bounds_min) / S(2);
    return (xs.colwise() - center).array().colwise() / half.array();
  }

  // Trunk + all position heads. Counts one appearance evaluation per column.
  void eval_points(const Eigen::Ref<const Mat3X<S>>& xs, PointBatch<S>& out,
                   TrunkCache<S>* cache = nullptr) const {
    if (!xs.allFinite()) throw std::invalid_argument("eval_points: non-finite position");
    counters.point_evals.fetch_add(std::uint64_t(xs.cols()), std::memory_order_relaxed);
    run_trunk(xs, out, cache);
  }

  // Direction heads on top of trunk features.
  void eval_levels(const Eigen::Ref<const MatX<S>>& feature, const Vec3<S>& dir,
                   LevelsBatch<S>& out, DirCache<S>* cache = nullptr) const {
    const FieldConfig& c = params.config;
    counters.dir_evals.fetch_add(std::uint64_t(feature.cols()), std::memory_order_relaxed);
    const MatX<S> denc = positional_encoding<S>(MatX<S>(dir), c.dir_encoding_order);
    MatX<S> input(feature.rows() + denc.rows(), feature.cols());
    input.topRows(feature.rows()) = feature;
    input.bottomRows(denc.rows()) = denc.replicate(1, feature.cols());
    dir_forward<S>(params, input, out, cache);
  }

  // Density-only probe used by the termination-depth finite differences.
  RowX<S> eval_sigma(const Eigen::Ref<const Mat3X<S>>& xs) const {
    counters.sigma_evals.fetch_add(std::uint64_t(xs.cols()), std::memory_order_relaxed);
    PointBatch<S> tmp;
    run_trunk(xs, tmp, nullptr, /*sigma_only=*/true);
    return tmp.sigma;
  }

 private:
  void run_trunk(const Eigen::Ref<const Mat3X<S>>& xs, PointBatch<S>& out,
                 TrunkCache<S>* cache, bool sigma_only = false) const {
    const MatX<S> enc =
        positional_encoding<S>(normalize(xs), params.config.pos_encoding_order);
    trunk_forward<S>(params, enc, out, cache, sigma_only);
  }
};

// Analytic stand-in with the same evaluation surface, for tests and synthetic
// scenes.
template <typename S>
class SyntheticField {
 public:
  std::function<S(const Vec3<S>&)> sigma_fn;
  std::function<Rgb<S>(const Vec3<S>&)> albedo_fn = [](const Vec3<S>&) { return Rgb<S>::Zero(); };
  std::function<S(const Vec3<S>&)> irr_fn = [](const Vec3<S>&) { return S(0); };
  std::function<S(const Vec3<S>&)> rough_fn = [](const Vec3<S>&) { return S(0.5); };
  std::function<Rgb<S>(const Vec3<S>&, const Vec3<S>&, int)> level_fn =
      [](const Vec3<S>&, const Vec3<S>&, int) { return Rgb<S>::Zero(); };
  int levels = 4;
  Vec3<S> bounds_min = Vec3<S>::Constant(S(-1));
  Vec3<S> bounds_max = Vec3<S>::Constant(S(1));
  mutable EvalCounters counters;

  int level_count() const { return levels; }

  void eval_points(const Eigen::Ref<const Mat3X<S>>& xs, PointBatch<S>& out,
                   TrunkCache<S>* = nullptr) const {
    counters.point_evals.fetch_add(std::uint64_t(xs.cols()), std::memory_order_relaxed);
    const int n = int(xs.cols());
    out.sigma.resize(n);
    out.irr.resize(n);
    out.rough.resize(n);
    out.albedo.resize(3, n);
    out.feature = xs;  // positions stand in for features
    for (int i = 0; i < n; ++i) {
      const Vec3<S> x = xs.col(i);
      out.sigma(i) = sigma_fn(x);
      out.irr(i) = irr_fn(x);
      out.rough(i) = rough_fn(x);
      out.albedo.col(i) = albedo_fn(x).matrix();
    }
  }

  void eval_levels(const Eigen::Ref<const MatX<S>>& feature, const Vec3<S>& dir,
                   LevelsBatch<S>& out, DirCache<S>* = nullptr) const {
    counters.dir_evals.fetch_add(std::uint64_t(feature.cols()), std::memory_order_relaxed);
    const int n = int(feature.cols());
    out.level.assign(size_t(levels), Mat3X<S>(3, n));
    for (int j = 0; j < levels; ++j)
      for (int i = 0; i < n; ++i)
        out.level[size_t(j)].col(i) = level_fn(Vec3<S>(feature.col(i).template head<3>()), dir, j).matrix();
  }

  RowX<S> eval_sigma(const Eigen::Ref<const Mat3X<S>>& xs) const {
    counters.sigma_evals.fetch_add(std::uint64_t(xs.cols()), std::memory_order_relaxed);
    RowX<S> out(xs.cols());
    for (int i = 0; i < xs.cols(); ++i) out(i) = sigma_fn(Vec3<S>(xs.col(i)));
    return out;
  }
};

// ---------------------------------------------------------------------------
// Volume rendering

// Single-point convenience wrapper over the batched path.
template <typename S, class Field>
struct PointSample {
  S sigma, irr, rough;
  Rgb<S> albedo;
};

template <typename S, class Field>
PointSample<S, Field> eval_point(const Field& field, const Vec3<S>& x) {
  PointBatch<S> pb;
  field.eval_points(Mat3X<S>(x), pb);
  return {pb.sigma(0), pb.irr(0), pb.rough(0), Rgb<S>(pb.albedo.col(0).array())};
}

template <typename S>
struct RaySamples {
  VecX<S> t;      // jittered positions, strictly increasing
  VecX<S> delta;  // stratum widths
};

template <typename S>
RaySamples<S> stratified_samples(S t_near, S t_far, int n, const VecX<S>& jitter) {
  if (!(t_near < t_far)) throw std::invalid_argument("stratified_samples: need t_near < t_far");
  RaySamples<S> s;
  s.t.resize(n);
  s.delta = VecX<S>::Constant(n, (t_far - t_near) / S(n));
  for (int i = 0; i < n; ++i) s.t(i) = t_near + (S(i) + jitter(i)) * s.delta(i);
  return s;
}

template <typename S>
VecX<S> uniform_jitter(int n, Prng& rng) {
  VecX<S> u(n);
  for (int i = 0; i < n; ++i) u(i) = rng.template uniform<S>();
  return u;
}

// w_i = T_i (1 - exp(-sigma_i delta_i)), T_i = exp(-sum_{k<i} sigma_k delta_k).
// The identity sum(w) + T_far = 1 holds exactly by telescoping.
template <typename S>
void volume_weights(const RowX<S>& sigma, const VecX<S>& delta, VecX<S>& weights, S& t_far_trans) {
  if (!sigma.allFinite()) throw std::runtime_error("volume_weights: non-finite density");
  const int n = int(sigma.size());
  weights.resize(n);
  S trans = S(1);
  for (int i = 0; i < n; ++i) {
    const S a = std::exp(-sigma(i) * delta(i));
    weights(i) = trans * (S(1) - a);
    trans *= a;
  }
  t_far_trans = trans;
}

template <typename S>
struct RayOutputs {
  Rgb<S> albedo = Rgb<S>::Zero();
  S irr = S(0);
  S rough = S(0);
  std::vector<Rgb<S>> levels;
  S depth = S(0);
  S t_far_trans = S(1);
  S weight_sum = S(0);
  VecX<S> weights;
};

template <typename S>
RayOutputs<S> volume_accumulate(const RaySamples<S>& samples, const PointBatch<S>& pb,
                                const LevelsBatch<S>* levels) {
  if (samples.t.size() == 0) throw std::invalid_argument("volume_accumulate: empty sample batch");
  RayOutputs<S> out;
  volume_weights<S>(pb.sigma, samples.delta, out.weights, out.t_far_trans);
  out.weight_sum = out.weights.sum();
  out.albedo = (pb.albedo * out.weights).array();
  out.irr = pb.irr * out.weights;
  out.rough = pb.rough * out.weights;
  out.depth = samples.t.dot(out.weights);
  if (levels) {
    out.levels.resize(levels->level.size());
    for (size_t j = 0; j < levels->level.size(); ++j)
      out.levels[j] = (levels->level[j] * out.weights).array();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ray-level queries

template <typename S, class Field>
RayOutputs<S> march_primary(const Field& field, const Vec3<S>& origin, const Vec3<S>& dir,
                            S t_near, S t_far, int n, const VecX<S>& jitter, bool want_levels) {
  const RaySamples<S> samples = stratified_samples<S>(t_near, t_far, n, jitter);
  Mat3X<S> xs(3, n);
  for (int i = 0; i < n; ++i) xs.col(i) = origin + samples.t(i) * dir;
  PointBatch<S> pb;
  field.eval_points(xs, pb);
  LevelsBatch<S> lb;
  if (want_levels) field.eval_levels(pb.feature, dir, lb);
  return volume_accumulate<S>(samples, pb, want_levels ? &lb : nullptr);
}

// Termination depth via a density-only march (no appearance counters).
template <typename S, class Field>
S termination_depth(const Field& field, const Vec3<S>& origin, const Vec3<S>& dir, S t_near,
                    S t_far, int n, const VecX<S>& jitter) {
  const RaySamples<S> samples = stratified_samples<S>(t_near, t_far, n, jitter);
  Mat3X<S> xs(3, n);
  for (int i = 0; i < n; ++i) xs.col(i) = origin + samples.t(i) * dir;
  const RowX<S> sigma = field.eval_sigma(xs);
  VecX<S> w;
  S tf;
  volume_weights<S>(sigma, samples.delta, w, tf);
  return samples.t.dot(w);
}

template <typename S>
struct NormalResult {
  Vec3<S> normal = Vec3<S>::UnitZ();
  bool degenerate = false;  // gradient below threshold, fell back to omega_o
};

// Normal from central differences of the termination depth with respect to
// the ray origin, re-cast along the same direction with identical jitters.
// Oriented to face the viewer (n . omega_o >= 0).
template <typename S, class Field>
NormalResult<S> surface_normal(const Field& field, const Vec3<S>& origin, const Vec3<S>& dir,
                               S t_near, S t_far, int n, const VecX<S>& jitter,
                               S step = S(1e-2)) {
  Vec3<S> grad;
  for (int k = 0; k < 3; ++k) {
    Vec3<S> e = Vec3<S>::Zero();
    e(k) = step;
    const S dp = termination_depth<S>(field, Vec3<S>(origin + e), dir, t_near, t_far, n, jitter);
    const S dm = termination_depth<S>(field, Vec3<S>(origin - e), dir, t_near, t_far, n, jitter);
    grad(k) = (dp - dm) / (S(2) * step);
  }
  NormalResult<S> res;
  const S norm = grad.norm();
  const Vec3<S> wo = -dir;
  if (norm < S(1e-6)) {
    res.normal = wo;
    res.degenerate = true;
    return res;
  }
  res.normal = grad / norm;
  if (res.normal.dot(wo) < S(0)) res.normal = -res.normal;
  return res;
}

template <typename S>
struct SecondaryResult {
  std::vector<Rgb<S>> levels;
  S d_reflect = S(0);
  S t_far_trans = S(1);
  bool escaped = false;  // transmittance above 0.5 on the secondary ray
};

template <typename S>
S ray_box_exit(const Vec3<S>& origin, const Vec3<S>& dir, const Vec3<S>& bmin,
               const Vec3<S>& bmax) {
  S t_exit = std::numeric_limits<S>::max();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir(a)) < S(1e-12)) continue;
    const S t0 = (bmin(a) - origin(a)) / dir(a);
    const S t1 = (bmax(a) - origin(a)) / dir(a);
    t_exit = std::min(t_exit, std::max(t0, t1));
  }
  return t_exit;
}

// Prefiltered radiance along the reflected ray from the surface point.
template <typename S, class Field>
SecondaryResult<S> query_prefiltered(const Field& field, const Vec3<S>& x_surf,
                                     const Vec3<S>& omega_r, int n, const VecX<S>& jitter,
                                     S offset = S(1e-3)) {
  const Vec3<S> origin = x_surf + offset * omega_r;
  const S t_exit = ray_box_exit<S>(origin, omega_r, field.bounds_min, field.bounds_max);
  SecondaryResult<S> res;
  if (!(t_exit > S(0))) {
    res.escaped = true;
    res.levels.assign(size_t(field.level_count()), Rgb<S>::Zero());
    return res;
  }
  const RayOutputs<S> out =
      march_primary<S>(field, origin, omega_r, S(0), t_exit, n, jitter, /*want_levels=*/true);
  res.levels = out.levels;
  res.d_reflect = out.depth;
  res.t_far_trans = out.t_far_trans;
  res.escaped = out.t_far_trans > S(0.5);
  return res;
}

}  // namespace iblkit
