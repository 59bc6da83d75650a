// Copyright (c) 2026 The iblkit Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "iblkit/camera.hpp"
#include "iblkit/field.hpp"
#include "iblkit/image.hpp"
#include "iblkit/mc.hpp"
#include "iblkit/prefilter.hpp"
#include "iblkit/train.hpp"

namespace iblkit {

// ---------------------------------------------------------------------------
// Dataset manifest

struct FrameRecord {
  std::string image;  // beauty PFM, relative to the manifest directory
  Mat4<double> camera_to_world = Mat4<double>::Identity();
  double focal_px = 64;
  int width = 64, height = 64;
  std::string split = "train";  // "train" or "test"
  std::optional<std::string> albedo_prior, irr_prior;
  std::optional<std::string> aov_albedo, aov_roughness, aov_normal, aov_depth, aov_irradiance;
};

struct FrameSet {
  std::vector<FrameRecord> frames;
  double t_near = 0.1, t_far = 10.0;
  Vec3d bounds_min = Vec3d::Constant(-1);
  Vec3d bounds_max = Vec3d::Constant(1);
  Rgbf background = Rgbf::Zero();
  std::string base_dir;  // directory of the manifest, for resolving paths

  std::string resolve(const std::string& rel) const;
  Camera camera_of(size_t index) const;
  std::vector<size_t> split_indices(const std::string& split) const;
};

FrameSet load_manifest(const std::string& path);
void save_manifest(const FrameSet& set, const std::string& path);

// ---------------------------------------------------------------------------
// Run configuration (strict keys; unknown keys are rejected)

struct RunConfig {
  FieldConfig field;
  std::uint64_t field_init_seed = 0;
  PrefilterSpec prefilter = PrefilterSpec::defaults();
  bool prefilter_d0_from_data = true;  // d0 = (near + far) / 2 unless set
  TrainConfig train;
  int render_n_primary = 64;
  int render_n_secondary = 64;
  int lut_resolution = 64;
  int lut_samples = 1 << 14;
  int mc_spp = 8;
  int mc_n_cos = 4;
  int mc_n_ggx = 4;
  int mc_n_irr = 4;
  double mc_prior_noise = 0.0;
  std::uint64_t seed = 0;
  std::string output_dir = ".";
};

RunConfig default_config();
RunConfig load_config(const std::string& path);  // JSON, validated
std::uint64_t config_hash(const RunConfig& cfg);

// ---------------------------------------------------------------------------
// Checkpoints: magic "IBLCKPT1\n", u32 tensor count, u32 (rows, cols) pairs,
// f32 parameters in declaration order, then a JSON metadata block.

struct CheckpointMeta {
  int step = 0;
  std::uint64_t config_hash = 0;
  FieldConfig field;
  Vec3d bounds_min = Vec3d::Constant(-1);
  Vec3d bounds_max = Vec3d::Constant(1);
};

void save_checkpoint(const FieldParams<float>& params, const Vec3f& bounds_min,
                     const Vec3f& bounds_max, int step, std::uint64_t cfg_hash,
                     const std::string& path);
MlpField<float> load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

// ---------------------------------------------------------------------------
// Dataset preparation for the trainer

TrainData prepare_train_data(const FrameSet& set, const PrefilterSpec& spec, bool want_priors);

// ---------------------------------------------------------------------------
// Dataset generation: renders posed reference views of an analytic scene with
// ground-truth AOVs and pseudo priors (AOVs with optional per-view
// multiplicative noise), and writes a manifest next to the images.

struct ScenegenOptions {
  int train_views = 20;
  int test_views = 5;
  int width = 64, height = 64;
  int spp = 8;
  std::uint64_t seed = 0;
  double prior_noise = 0.0;
  int n_cos = 4, n_ggx = 4, n_irr = 4;
};

FrameSet generate_dataset(const AnalyticScene& scene, const ScenegenOptions& opts,
                          const std::string& out_dir);

// Line-delimited metrics log.
class MetricsLog {
 public:
  explicit MetricsLog(const std::string& path);
  void append(const StepStats<float>& stats);
  void append(int step, int phase, double render, double pref, double prior, double ireg,
              double total, double wall_ms);

 private:
  std::string path_;
};

}  // namespace iblkit
