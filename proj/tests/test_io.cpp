// Copyright (c) 2026 The iblkit Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "iblkit/io.hpp"

using namespace iblkit;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const char* name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::create_directories(p);
  return p.string();
}

FrameSet tiny_dataset(const std::string& dir) {
  AnalyticScene scene = builtin_scene("box");
  ScenegenOptions opts;
  opts.train_views = 2;
  opts.test_views = 1;
  opts.width = 8;
  opts.height = 8;
  opts.spp = 1;
  opts.seed = 7;
  opts.n_cos = 1;
  opts.n_ggx = 1;
  opts.n_irr = 1;
  return generate_dataset(scene, opts, dir);
}

}  // namespace

TEST_CASE("generate_dataset writes a loadable manifest with priors and AOVs") {
  const std::string dir = temp_dir("iblkit_ds");
  const FrameSet gen = tiny_dataset(dir);
  REQUIRE(gen.frames.size() == 3);

  const FrameSet loaded = load_manifest(dir + "/manifest.json");
  REQUIRE(loaded.frames.size() == 3);
  CHECK(loaded.split_indices("train").size() == 2);
  CHECK(loaded.split_indices("test").size() == 1);
  CHECK(loaded.t_near == doctest::Approx(gen.t_near));
  CHECK((loaded.bounds_min - gen.bounds_min).norm() < 1e-12);
  for (size_t i = 0; i < loaded.frames.size(); ++i) {
    CHECK((loaded.frames[i].camera_to_world - gen.frames[i].camera_to_world).norm() < 1e-9);
    CHECK(fs::exists(loaded.resolve(*loaded.frames[i].albedo_prior)));
    CHECK(fs::exists(loaded.resolve(*loaded.frames[i].aov_irradiance)));
  }
  const Camera cam = loaded.camera_of(0);
  CHECK(cam.width == 8);

  // Deterministic per seed: regenerate into a second directory.
  const std::string dir2 = temp_dir("iblkit_ds2");
  const FrameSet gen2 = tiny_dataset(dir2);
  const Image a = read_pfm(gen.resolve(gen.frames[0].image));
  const Image b = read_pfm(gen2.resolve(gen2.frames[0].image));
  for (int c = 0; c < 3; ++c) CHECK((a.planes[c] == b.planes[c]).all());
  fs::remove_all(dir2);
}

TEST_CASE("manifest error paths") {
  const std::string dir = temp_dir("iblkit_mf");
  FrameSet gen = tiny_dataset(dir);
  const std::string path = dir + "/manifest.json";

  SUBCASE("scaled rotation rejected") {
    FrameSet bad = gen;
    bad.frames[0].camera_to_world.block<3, 3>(0, 0) *= 2.0;
    save_manifest(bad, path);
    CHECK_THROWS_WITH_AS(load_manifest(path), "load_manifest: non-orthonormal camera rotation",
                         std::runtime_error);
  }
  SUBCASE("near >= far rejected") {
    FrameSet bad = gen;
    bad.t_near = bad.t_far;
    save_manifest(bad, path);
    CHECK_THROWS_WITH_AS(load_manifest(path), "load_manifest: near >= far", std::runtime_error);
  }
  SUBCASE("missing image rejected") {
    FrameSet bad = gen;
    bad.frames[1].image = "nope.pfm";
    save_manifest(bad, path);
    CHECK_THROWS_AS(load_manifest(path), std::runtime_error);
  }
  save_manifest(gen, path);  // restore for other tests
}

TEST_CASE("checkpoint roundtrip and error paths") {
  FieldConfig fc;
  fc.pos_encoding_order = 3;
  fc.dir_encoding_order = 2;
  fc.trunk_depth = 2;
  fc.trunk_width = 12;
  fc.skip_layer = 1;
  fc.dir_hidden = 6;
  FieldParams<float> params = FieldParams<float>::init(fc, 99);
  const std::string path = (fs::temp_directory_path() / "iblkit_test.ckpt").string();
  save_checkpoint(params, Vec3f::Constant(-2), Vec3f::Constant(2), 123, 0xABCDull, path);

  CheckpointMeta meta;
  const MlpField<float> field = load_checkpoint(path, &meta);
  CHECK(meta.step == 123);
  CHECK(meta.config_hash == 0xABCDull);
  CHECK(meta.field.trunk_width == 12);
  CHECK((field.params.flat.array() == params.flat.array()).all());
  CHECK(field.bounds_min.x() == -2.0f);

  SUBCASE("bad magic") {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(0);
    f.write("IBLCKPT9", 8);
    f.close();
    CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  }
  SUBCASE("truncated payload") {
    std::ifstream is(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(is)), {});
    is.close();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write(bytes.data(), std::streamsize(bytes.size() / 2));
    os.close();
    CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  }
  fs::remove(path);
}

TEST_CASE("config parsing validates keys") {
  const std::string path = (fs::temp_directory_path() / "iblkit_cfg.json").string();
  {
    std::ofstream os(path);
    os << R"({
      "field": {"trunk_width": 48, "trunk_depth": 4, "skip_layer": 2},
      "prefilter": {"gammas": [0, 0.33333333, 0.66666667, 1.0], "sigmas_px": [0, 2, 8, 32]},
      "train": {"steps": 100, "phase1_end": 10, "phase2_end": 50, "batch_rays": 32,
                "lambda_ireg": 0.2, "samples_per_ray": 24},
      "shade": {"background": [0.1, 0.2, 0.3]},
      "seed": 42
    })";
  }
  const RunConfig cfg = load_config(path);
  CHECK(cfg.field.trunk_width == 48);
  CHECK(cfg.train.schedule.total_steps == 100);
  CHECK(cfg.train.lambda_ireg == doctest::Approx(0.2));
  CHECK(cfg.train.n_primary == 24);
  CHECK(cfg.train.shade.background(2) == doctest::Approx(0.3f));
  CHECK(cfg.seed == 42);
  CHECK(config_hash(cfg) != config_hash(default_config()));

  {
    std::ofstream os(path, std::ios::trunc);
    os << R"({"train": {"step_count": 100}})";
  }
  CHECK_THROWS_WITH_AS(load_config(path), "config: unknown key 'train.step_count'",
                       std::runtime_error);
  {
    std::ofstream os(path, std::ios::trunc);
    os << R"({"bogus": 1})";
  }
  CHECK_THROWS_AS(load_config(path), std::runtime_error);
  fs::remove(path);
}

TEST_CASE("prepare_train_data builds blur pyramids and the irradiance mean") {
  const std::string dir = temp_dir("iblkit_ds");
  const FrameSet set = load_manifest(dir + "/manifest.json");
  const PrefilterSpec spec = PrefilterSpec::defaults(0.5 * (set.t_near + set.t_far));
  const TrainData data = prepare_train_data(set, spec, /*want_priors=*/true);
  REQUIRE(data.views.size() == 2);
  CHECK(data.has_priors);
  CHECK(data.mean_irr > 0.0);
  REQUIRE(data.views[0].blurred.size() == 4);
  // Level 0 equals the input image; higher levels are smoothed.
  const Image img = read_pfm(set.resolve(set.frames[0].image));
  CHECK((data.views[0].blurred[0].planes[0] == img.planes[0]).all());
  fs::remove_all(dir);
}

TEST_CASE("metrics log is line-delimited json") {
  const std::string path = (fs::temp_directory_path() / "iblkit_metrics.jsonl").string();
  MetricsLog log(path);
  log.append(0, 1, 0.0, 0.5, 0.0, 0.0, 0.5, 12.0);
  log.append(1, 2, 0.25, 0.4, 0.0, 0.0, 0.65, 13.5);
  std::ifstream is(path);
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) {
    CHECK(line.find("\"step\":") != std::string::npos);
    ++lines;
  }
  CHECK(lines == 2);
  fs::remove(path);
}
