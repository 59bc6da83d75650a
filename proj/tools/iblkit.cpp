// Copyright (c) 2026 The iblkit Authors.
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>

#include "iblkit/io.hpp"
#include "iblkit/lut.hpp"
#include "iblkit/mc.hpp"
#include "iblkit/shade.hpp"
#include "iblkit/train.hpp"
#include "iblkit/validate.hpp"

namespace fs = std::filesystem;
using namespace iblkit;

namespace {

Camera load_pose(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_pose: cannot open " + path);
  nlohmann::json j;
  is >> j;
  Camera cam;
  const auto& m = j.at("camera_to_world");
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) cam.cam_to_world(r, c) = m.at(size_t(r) * 4 + c);
  cam.focal_px = j.at("focal_px");
  cam.width = j.at("width");
  cam.height = j.at("height");
  return cam;
}

void export_pair(const Image& img, const fs::path& dir, const std::string& stem) {
  write_pfm(img, (dir / (stem + ".pfm")).string());
  export_png(img, (dir / (stem + ".png")).string());
}

Image remap_normal(const Image& normal) {
  Image out = normal;
  for (auto& plane : out.planes) plane = 0.5f * (plane + 1.0f);
  return out;
}

struct RenderBundle {
  MlpField<float> field;
  CheckpointMeta meta;
  BrdfLut lut;
  PrefilterSpec spec;
  ShadeOptions shade;
  RenderOptions ropts;
};

RenderBundle make_bundle(const std::string& ckpt, const std::string& lut_path,
                         const FrameSet* data, std::uint64_t seed) {
  RenderBundle b;
  b.field = load_checkpoint(ckpt, &b.meta);
  b.lut = lut_path.empty() ? compute_lut(64, 1 << 14, seed) : load_lut(lut_path);
  double d0 = 1.0;
  if (data) {
    d0 = 0.5 * (data->t_near + data->t_far);
    b.shade.background = data->background;
  }
  b.spec = PrefilterSpec::defaults(d0);
  b.ropts.seed = seed;
  return b;
}

void write_frame_outputs(const ViewFrame<float>& frame, const fs::path& dir,
                         const std::string& prefix, bool aovs) {
  fs::create_directories(dir);
  export_pair(frame.beauty, dir, prefix + "beauty");
  if (!aovs) return;
  export_pair(frame.albedo, dir, prefix + "albedo");
  export_pair(frame.roughness, dir, prefix + "roughness");
  export_pair(frame.irradiance, dir, prefix + "irradiance");
  export_pair(remap_normal(frame.normal), dir, prefix + "normal");
  write_pfm(frame.depth, (dir / (prefix + "depth.pfm")).string());
  for (size_t j = 0; j < frame.primary_levels.size(); ++j)
    export_pair(frame.primary_levels[j], dir, prefix + "pref_l" + std::to_string(j));
}

int cmd_lut(int res, int samples, std::uint64_t seed, const std::string& out) {
  const BrdfLut lut = compute_lut(res, samples, seed);
  save_lut(lut, out);
  std::printf("wrote %dx%d LUT (%d samples/cell) to %s\n", res, res, samples, out.c_str());
  return 0;
}

int cmd_scenegen(const std::string& scene_name, int views, int test_views,
                 const std::string& size, int spp, std::uint64_t seed, double prior_noise,
                 const std::string& out) {
  AnalyticScene scene;
  if (fs::exists(scene_name))
    scene = load_scene(scene_name);
  else
    scene = builtin_scene(scene_name);
  ScenegenOptions opts;
  opts.train_views = views;
  opts.test_views = test_views;
  if (std::sscanf(size.c_str(), "%dx%d", &opts.width, &opts.height) != 2)
    throw CLI::ValidationError("--size", "expected WxH");
  opts.spp = spp;
  opts.seed = seed;
  opts.prior_noise = prior_noise;
  const FrameSet set = generate_dataset(scene, opts, out);
  std::printf("wrote %zu frames (%d train / %d test) to %s\n", set.frames.size(), views,
              test_views, out.c_str());
  return 0;
}

int cmd_train(const std::string& data_path, const std::string& config_path,
              const std::string& out) {
  RunConfig cfg = config_path.empty() ? default_config() : load_config(config_path);
  const FrameSet set = load_manifest(data_path);
  if (cfg.prefilter_d0_from_data) cfg.prefilter.d0 = 0.5 * (set.t_near + set.t_far);
  cfg.train.shade.background = set.background;
  cfg.train.seed = cfg.train.seed ? cfg.train.seed : cfg.seed;

  fs::create_directories(out);
  const TrainData data = prepare_train_data(set, cfg.prefilter, /*want_priors=*/true);
  const BrdfLut lut = compute_lut(cfg.lut_resolution, cfg.lut_samples, cfg.seed);

  MlpField<float> field(
      FieldParams<float>::init(cfg.field, cfg.field_init_seed ? cfg.field_init_seed : cfg.seed),
      set.bounds_min.cast<float>(), set.bounds_max.cast<float>());

  const std::uint64_t hash = config_hash(cfg);
  Trainer<float> trainer(field, data, lut, cfg.prefilter, cfg.train);
  MetricsLog log((fs::path(out) / "metrics.jsonl").string());
  const Schedule& sched = cfg.train.schedule;
  for (int step = 0; step < sched.total_steps; ++step) {
    const auto stats = trainer.train_step(step);
    log.append(stats);
    if (step + 1 == sched.phase1_end)
      save_checkpoint(field.params, field.bounds_min, field.bounds_max, step + 1, hash,
                      (fs::path(out) / "ckpt_phase1.bin").string());
    if (step + 1 == sched.phase2_end)
      save_checkpoint(field.params, field.bounds_min, field.bounds_max, step + 1, hash,
                      (fs::path(out) / "ckpt_phase2.bin").string());
    if (step % 250 == 0)
      std::printf("step %5d phase %d total %.5f (render %.5f pref %.5f)\n", step, stats.phase,
                  double(stats.total), double(stats.parts.render), double(stats.parts.pref));
  }
  save_checkpoint(field.params, field.bounds_min, field.bounds_max, sched.total_steps, hash,
                  (fs::path(out) / "ckpt_final.bin").string());
  if (trainer.skipped_steps() > 0)
    std::printf("skipped %llu non-finite steps\n",
                static_cast<unsigned long long>(trainer.skipped_steps()));
  std::printf("trained %d steps; checkpoints and metrics in %s\n", sched.total_steps,
              out.c_str());
  return 0;
}

int cmd_render(const std::string& ckpt, const std::string& data_path, int camera_index,
               const std::string& pose_path, const std::string& lut_path, bool aovs,
               int n_primary, int n_secondary, std::uint64_t seed, const std::string& out) {
  std::optional<FrameSet> set;
  if (!data_path.empty()) set = load_manifest(data_path);
  RenderBundle b = make_bundle(ckpt, lut_path, set ? &*set : nullptr, seed);
  Camera cam;
  if (!pose_path.empty())
    cam = load_pose(pose_path);
  else if (set)
    cam = set->camera_of(size_t(camera_index));
  else
    throw CLI::ValidationError("render", "need --data with --camera-index, or --pose");
  if (pose_path.empty() == false && set) {
    cam.t_near = set->t_near;
    cam.t_far = set->t_far;
  }
  b.ropts.n_primary = n_primary;
  b.ropts.n_secondary = n_secondary;
  b.ropts.want_primary_levels = aovs;
  const auto frame = render_view<float>(b.field, cam, b.lut, b.spec, b.shade, b.ropts);
  write_frame_outputs(frame, out, "", aovs);
  std::printf("rendered %dx%d view to %s\n", cam.width, cam.height, out.c_str());
  return 0;
}

int cmd_decompose(const std::string& ckpt, const std::string& data_path,
                  const std::string& lut_path, int n_primary, int n_secondary,
                  std::uint64_t seed, const std::string& out) {
  const FrameSet set = load_manifest(data_path);
  RenderBundle b = make_bundle(ckpt, lut_path, &set, seed);
  b.ropts.n_primary = n_primary;
  b.ropts.n_secondary = n_secondary;
  b.ropts.want_primary_levels = true;
  const auto test_ids = set.split_indices("test");
  if (test_ids.empty()) throw std::runtime_error("decompose: manifest has no test frames");
  for (size_t idx : test_ids) {
    const Camera cam = set.camera_of(idx);
    const auto frame = render_view<float>(b.field, cam, b.lut, b.spec, b.shade, b.ropts);
    char prefix[32];
    std::snprintf(prefix, sizeof prefix, "view_%03zu_", idx);
    write_frame_outputs(frame, out, prefix, /*aovs=*/true);
  }
  std::printf("decomposed %zu test views into %s\n", test_ids.size(), out.c_str());
  return 0;
}

int cmd_edit(const std::string& ckpt, const std::string& data_path, const std::string& edits_path,
             int camera_index, const std::string& pose_path, const std::string& lut_path,
             int n_primary, int n_secondary, std::uint64_t seed, const std::string& out) {
  std::optional<FrameSet> set;
  if (!data_path.empty()) set = load_manifest(data_path);
  RenderBundle b = make_bundle(ckpt, lut_path, set ? &*set : nullptr, seed);
  Camera cam;
  if (!pose_path.empty())
    cam = load_pose(pose_path);
  else if (set)
    cam = set->camera_of(size_t(camera_index));
  else
    throw CLI::ValidationError("edit", "need --data with --camera-index, or --pose");
  b.ropts.n_primary = n_primary;
  b.ropts.n_secondary = n_secondary;

  const EditSpec edits = load_edits(edits_path);
  const auto frame = render_view<float>(b.field, cam, b.lut, b.spec, b.shade, b.ropts);
  Image edited = apply_edits<float>(frame, edits, b.lut, b.spec);
  ViewFrame<float> staged = frame;
  staged.beauty = edited;
  for (const ObjectEdit& obj : edits.objects)
    staged.beauty = insert_object<float>(staged, obj, b.field, b.lut, b.spec, b.ropts);

  fs::create_directories(out);
  export_pair(frame.beauty, out, "original");
  export_pair(staged.beauty, out, "edited");
  std::printf("edited view written to %s\n", out.c_str());
  return 0;
}

int cmd_validate(const std::string& suite, std::uint64_t seed) {
  std::vector<std::string> suites;
  if (suite == "all")
    suites = {"brdf", "lut", "kernel", "volume", "splitsum", "gradients", "counters"};
  else
    suites = {suite};
  bool ok = true;
  for (const auto& s : suites) {
    const SuiteReport report = run_validate_suite(s, seed);
    print_report(report);
    ok = ok && report.pass();
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"iblkit: prefiltered-radiance neural field toolkit"};
  app.require_subcommand(1);

  int threads = 0;
  bool deterministic = false;
  app.add_option("--threads", threads, "worker thread cap (0 = hardware)");
  app.add_flag("--deterministic", deterministic, "single-threaded deterministic execution");

  // lut
  auto* lut_cmd = app.add_subcommand("lut", "precompute the split-sum BRDF LUT");
  int lut_res = 64, lut_samples = 1 << 14;
  std::uint64_t lut_seed = 0;
  std::string lut_out = "brdf.lut";
  lut_cmd->add_option("--res", lut_res, "grid resolution per axis");
  lut_cmd->add_option("--samples", lut_samples, "samples per cell");
  lut_cmd->add_option("--seed", lut_seed, "rng seed");
  lut_cmd->add_option("--out", lut_out, "output path")->required();

  // scenegen
  auto* gen_cmd = app.add_subcommand("scenegen", "render an analytic scene into a dataset");
  std::string gen_scene = "box", gen_size = "64x64", gen_out;
  int gen_views = 20, gen_test = 5, gen_spp = 8;
  std::uint64_t gen_seed = 0;
  double gen_noise = 0.0;
  gen_cmd->add_option("--scene", gen_scene, "builtin name (box, floor) or scene JSON path");
  gen_cmd->add_option("--views", gen_views, "training view count");
  gen_cmd->add_option("--test-views", gen_test, "held-out view count");
  gen_cmd->add_option("--size", gen_size, "image size WxH");
  gen_cmd->add_option("--spp", gen_spp, "samples per pixel");
  gen_cmd->add_option("--seed", gen_seed, "rng seed");
  gen_cmd->add_option("--prior-noise", gen_noise, "per-view multiplicative prior noise");
  gen_cmd->add_option("--out", gen_out, "output directory")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "optimize the field on a dataset");
  std::string train_data, train_cfg, train_out = "run";
  train_cmd->add_option("--data", train_data, "manifest path")->required();
  train_cmd->add_option("--config", train_cfg, "run config JSON");
  train_cmd->add_option("--out", train_out, "output directory");

  // render
  auto* render_cmd = app.add_subcommand("render", "render a view from a checkpoint");
  std::string r_ckpt, r_data, r_pose, r_lut, r_out = "render_out";
  int r_index = 0, r_np = 64, r_ns = 64;
  std::uint64_t r_seed = 0;
  bool r_aovs = false;
  render_cmd->add_option("--ckpt", r_ckpt, "checkpoint path")->required();
  render_cmd->add_option("--data", r_data, "manifest path (cameras, background)");
  render_cmd->add_option("--camera-index", r_index, "frame index into the manifest");
  render_cmd->add_option("--pose", r_pose, "pose JSON path");
  render_cmd->add_option("--lut", r_lut, "LUT file (default: compute)");
  render_cmd->add_flag("--aovs", r_aovs, "write intrinsic AOV images");
  render_cmd->add_option("--samples", r_np, "primary samples per ray");
  render_cmd->add_option("--secondary-samples", r_ns, "secondary samples per ray");
  render_cmd->add_option("--seed", r_seed, "rng seed");
  render_cmd->add_option("--out", r_out, "output directory");

  // decompose
  auto* dec_cmd = app.add_subcommand("decompose", "intrinsic images for every test view");
  std::string d_ckpt, d_data, d_lut, d_out = "decompose_out";
  int d_np = 64, d_ns = 64;
  std::uint64_t d_seed = 0;
  dec_cmd->add_option("--ckpt", d_ckpt, "checkpoint path")->required();
  dec_cmd->add_option("--data", d_data, "manifest path")->required();
  dec_cmd->add_option("--lut", d_lut, "LUT file (default: compute)");
  dec_cmd->add_option("--samples", d_np, "primary samples per ray");
  dec_cmd->add_option("--secondary-samples", d_ns, "secondary samples per ray");
  dec_cmd->add_option("--seed", d_seed, "rng seed");
  dec_cmd->add_option("--out", d_out, "output directory");

  // edit
  auto* edit_cmd = app.add_subcommand("edit", "re-render with material edits or inserted objects");
  std::string e_ckpt, e_data, e_edits, e_pose, e_lut, e_out = "edit_out";
  int e_index = 0, e_np = 64, e_ns = 64;
  std::uint64_t e_seed = 0;
  edit_cmd->add_option("--ckpt", e_ckpt, "checkpoint path")->required();
  edit_cmd->add_option("--edits", e_edits, "edit spec JSON")->required();
  edit_cmd->add_option("--data", e_data, "manifest path");
  edit_cmd->add_option("--camera-index", e_index, "frame index into the manifest");
  edit_cmd->add_option("--pose", e_pose, "pose JSON path");
  edit_cmd->add_option("--lut", e_lut, "LUT file (default: compute)");
  edit_cmd->add_option("--samples", e_np, "primary samples per ray");
  edit_cmd->add_option("--secondary-samples", e_ns, "secondary samples per ray");
  edit_cmd->add_option("--seed", e_seed, "rng seed");
  edit_cmd->add_option("--out", e_out, "output directory");

  // validate
  auto* val_cmd = app.add_subcommand("validate", "run a property suite");
  std::string v_suite;
  std::uint64_t v_seed = 0;
  val_cmd
      ->add_option("--suite", v_suite,
                   "brdf | lut | kernel | volume | splitsum | gradients | counters | all")
      ->required();
  val_cmd->add_option("--seed", v_seed, "rng seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (deterministic) threads = 1;
  if (threads > 0) set_thread_count(threads);

  try {
    if (*lut_cmd) return cmd_lut(lut_res, lut_samples, lut_seed, lut_out);
    if (*gen_cmd)
      return cmd_scenegen(gen_scene, gen_views, gen_test, gen_size, gen_spp, gen_seed, gen_noise,
                          gen_out);
    if (*train_cmd) return cmd_train(train_data, train_cfg, train_out);
    if (*render_cmd)
      return cmd_render(r_ckpt, r_data, r_index, r_pose, r_lut, r_aovs, r_np, r_ns, r_seed,
                        r_out);
    if (*dec_cmd) return cmd_decompose(d_ckpt, d_data, d_lut, d_np, d_ns, d_seed, d_out);
    if (*edit_cmd)
      return cmd_edit(e_ckpt, e_data, e_edits, e_index, e_pose, e_lut, e_np, e_ns, e_seed, e_out);
    if (*val_cmd) return cmd_validate(v_suite, v_seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
