// Copyright (c) 2026 The iblkit Authors.
// SPDX-License-Identifier: Apache-2.0

#include "iblkit/io.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <cstring>

#include <json.hpp>

namespace iblkit {

namespace fs = std::filesystem;
using nlohmann::json;

std::string FrameSet::resolve(const std::string& rel) const {
  if (rel.empty() || rel.front() == '/') return rel;
  return (fs::path(base_dir) / rel).string();
}

Camera FrameSet::camera_of(size_t index) const {
  const FrameRecord& fr = frames.at(index);
  Camera cam;
  cam.cam_to_world = fr.camera_to_world;
  cam.focal_px = fr.focal_px;
  cam.width = fr.width;
  cam.height = fr.height;
  cam.t_near = t_near;
  cam.t_far = t_far;
  return cam;
}

std::vector<size_t> FrameSet::split_indices(const std::string& split) const {
  std::vector<size_t> out;
  for (size_t i = 0; i < frames.size(); ++i)
    if (frames[i].split == split) out.push_back(i);
  return out;
}

namespace {

json vec3_json(const Vec3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3d json_vec3(const json& a) { return Vec3d(a.at(0), a.at(1), a.at(2)); }

}  // namespace

FrameSet load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_manifest: cannot open " + path);
  json j;
  is >> j;
  FrameSet set;
  set.base_dir = fs::path(path).parent_path().string();
  set.t_near = j.at("near");
  set.t_far = j.at("far");
  if (!(set.t_near < set.t_far)) throw std::runtime_error("load_manifest: near >= far");
  set.bounds_min = json_vec3(j.at("bounds_min"));
  set.bounds_max = json_vec3(j.at("bounds_max"));
  if (j.contains("background"))
    set.background = json_vec3(j.at("background")).cast<float>().array();

  for (const auto& fj : j.at("frames")) {
    FrameRecord fr;
    fr.image = fj.at("image");
    const auto& m = fj.at("camera_to_world");
    if (m.size() != 16) throw std::runtime_error("load_manifest: camera matrix needs 16 entries");
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) fr.camera_to_world(r, c) = m.at(size_t(r) * 4 + c);
    const Eigen::Matrix3d rot = fr.camera_to_world.block<3, 3>(0, 0);
    if ((rot.transpose() * rot - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-4)
      throw std::runtime_error("load_manifest: non-orthonormal camera rotation");
    fr.focal_px = fj.at("focal_px");
    fr.width = fj.at("width");
    fr.height = fj.at("height");
    fr.split = fj.value("split", "train");
    auto opt = [&](const char* key) -> std::optional<std::string> {
      if (fj.contains(key)) return fj.at(key).get<std::string>();
      return std::nullopt;
    };
    fr.albedo_prior = opt("albedo_prior");
    fr.irr_prior = opt("irr_prior");
    fr.aov_albedo = opt("aov_albedo");
    fr.aov_roughness = opt("aov_roughness");
    fr.aov_normal = opt("aov_normal");
    fr.aov_depth = opt("aov_depth");
    fr.aov_irradiance = opt("aov_irradiance");
    if (!fs::exists(set.resolve(fr.image)))
      throw std::runtime_error("load_manifest: missing image file " + fr.image);
    set.frames.push_back(std::move(fr));
  }
  return set;
}

void save_manifest(const FrameSet& set, const std::string& path) {
  json j;
  j["near"] = set.t_near;
  j["far"] = set.t_far;
  j["bounds_min"] = vec3_json(set.bounds_min);
  j["bounds_max"] = vec3_json(set.bounds_max);
  j["background"] = json::array({set.background(0), set.background(1), set.background(2)});
  j["frames"] = json::array();
  for (const FrameRecord& fr : set.frames) {
    json fj;
    fj["image"] = fr.image;
    json m = json::array();
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) m.push_back(fr.camera_to_world(r, c));
    fj["camera_to_world"] = m;
    fj["focal_px"] = fr.focal_px;
    fj["width"] = fr.width;
    fj["height"] = fr.height;
    fj["split"] = fr.split;
    auto put = [&](const char* key, const std::optional<std::string>& v) {
      if (v) fj[key] = *v;
    };
    put("albedo_prior", fr.albedo_prior);
    put("irr_prior", fr.irr_prior);
    put("aov_albedo", fr.aov_albedo);
    put("aov_roughness", fr.aov_roughness);
    put("aov_normal", fr.aov_normal);
    put("aov_depth", fr.aov_depth);
    put("aov_irradiance", fr.aov_irradiance);
    j["frames"].push_back(fj);
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_manifest: cannot open " + path);
  os << j.dump(1);
}

// ---------------------------------------------------------------------------
// Config

RunConfig default_config() { return RunConfig{}; }

namespace {

void check_keys(const json& j, const std::string& scope,
                const std::set<std::string>& allowed) {
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key))
      throw std::runtime_error("config: unknown key '" + scope + key + "'");
}

}  // namespace

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_config: cannot open " + path);
  json j;
  is >> j;
  RunConfig cfg;
  check_keys(j, "", {"field", "prefilter", "train", "render", "shade", "lut", "mc", "seed",
                     "output_dir"});

  if (j.contains("field")) {
    const json& f = j["field"];
    check_keys(f, "field.", {"pos_encoding_order", "dir_encoding_order", "trunk_depth",
                             "trunk_width", "skip_layer", "dir_hidden", "init_seed"});
    cfg.field.pos_encoding_order = f.value("pos_encoding_order", cfg.field.pos_encoding_order);
    cfg.field.dir_encoding_order = f.value("dir_encoding_order", cfg.field.dir_encoding_order);
    cfg.field.trunk_depth = f.value("trunk_depth", cfg.field.trunk_depth);
    cfg.field.trunk_width = f.value("trunk_width", cfg.field.trunk_width);
    cfg.field.skip_layer = f.value("skip_layer", cfg.field.skip_layer);
    cfg.field.dir_hidden = f.value("dir_hidden", cfg.field.dir_hidden);
    cfg.field_init_seed = f.value("init_seed", cfg.field_init_seed);
  }
  if (j.contains("prefilter")) {
    const json& p = j["prefilter"];
    check_keys(p, "prefilter.", {"levels", "gammas", "sigmas_px", "d0"});
    if (p.contains("gammas")) {
      const auto g = p["gammas"].get<std::vector<double>>();
      cfg.prefilter.gammas = Eigen::Map<const Eigen::ArrayXd>(g.data(), Eigen::Index(g.size()));
    }
    if (p.contains("sigmas_px")) {
      const auto s = p["sigmas_px"].get<std::vector<double>>();
      cfg.prefilter.sigmas_px =
          Eigen::Map<const Eigen::ArrayXd>(s.data(), Eigen::Index(s.size()));
    }
    if (p.contains("levels") && int(p["levels"]) != cfg.prefilter.levels())
      throw std::runtime_error("config: prefilter.levels disagrees with gamma list");
    if (p.contains("d0")) {
      cfg.prefilter.d0 = p["d0"];
      cfg.prefilter_d0_from_data = false;
    }
    cfg.prefilter.validate();
    cfg.field.levels = cfg.prefilter.levels();
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    check_keys(t, "train.",
               {"steps", "phase1_end", "phase2_end", "batch_rays", "lr_start", "lr_end",
                "lambda_ireg", "seed", "deterministic", "samples_per_ray", "secondary_samples",
                "normal_step"});
    cfg.train.schedule.total_steps = t.value("steps", cfg.train.schedule.total_steps);
    cfg.train.schedule.phase1_end = t.value("phase1_end", cfg.train.schedule.phase1_end);
    cfg.train.schedule.phase2_end = t.value("phase2_end", cfg.train.schedule.phase2_end);
    cfg.train.schedule.batch_rays = t.value("batch_rays", cfg.train.schedule.batch_rays);
    cfg.train.schedule.lr_start = t.value("lr_start", cfg.train.schedule.lr_start);
    cfg.train.schedule.lr_end = t.value("lr_end", cfg.train.schedule.lr_end);
    cfg.train.lambda_ireg = t.value("lambda_ireg", cfg.train.lambda_ireg);
    cfg.train.seed = t.value("seed", cfg.train.seed);
    cfg.train.deterministic = t.value("deterministic", cfg.train.deterministic);
    cfg.train.n_primary = t.value("samples_per_ray", cfg.train.n_primary);
    cfg.train.n_secondary = t.value("secondary_samples", cfg.train.n_secondary);
    cfg.train.normal_step = t.value("normal_step", cfg.train.normal_step);
  }
  if (j.contains("render")) {
    const json& r = j["render"];
    check_keys(r, "render.", {"samples_per_ray", "secondary_samples"});
    cfg.render_n_primary = r.value("samples_per_ray", cfg.render_n_primary);
    cfg.render_n_secondary = r.value("secondary_samples", cfg.render_n_secondary);
  }
  if (j.contains("shade")) {
    const json& s = j["shade"];
    check_keys(s, "shade.", {"metallic_from_roughness", "background", "hit_threshold"});
    cfg.train.shade.metallic_from_roughness =
        s.value("metallic_from_roughness", cfg.train.shade.metallic_from_roughness);
    if (s.contains("background")) {
      const auto b = s["background"].get<std::vector<double>>();
      cfg.train.shade.background = Rgbf(float(b.at(0)), float(b.at(1)), float(b.at(2)));
    }
    cfg.train.shade.hit_threshold = s.value("hit_threshold", cfg.train.shade.hit_threshold);
  }
  if (j.contains("lut")) {
    const json& l = j["lut"];
    check_keys(l, "lut.", {"resolution", "samples_per_cell"});
    cfg.lut_resolution = l.value("resolution", cfg.lut_resolution);
    cfg.lut_samples = l.value("samples_per_cell", cfg.lut_samples);
  }
  if (j.contains("mc")) {
    const json& m = j["mc"];
    check_keys(m, "mc.", {"spp", "n_cos", "n_ggx", "n_irr", "prior_noise"});
    cfg.mc_spp = m.value("spp", cfg.mc_spp);
    cfg.mc_n_cos = m.value("n_cos", cfg.mc_n_cos);
    cfg.mc_n_ggx = m.value("n_ggx", cfg.mc_n_ggx);
    cfg.mc_n_irr = m.value("n_irr", cfg.mc_n_irr);
    cfg.mc_prior_noise = m.value("prior_noise", cfg.mc_prior_noise);
  }
  cfg.seed = j.value("seed", cfg.seed);
  cfg.output_dir = j.value("output_dir", cfg.output_dir);
  return cfg;
}

std::uint64_t config_hash(const RunConfig& cfg) {
  // FNV-1a over a canonical rendering of the configuration.
  std::string repr;
  auto add = [&repr](const std::string& s) {
    repr += s;
    repr += ';';
  };
  add(std::to_string(cfg.field.pos_encoding_order));
  add(std::to_string(cfg.field.dir_encoding_order));
  add(std::to_string(cfg.field.trunk_depth));
  add(std::to_string(cfg.field.trunk_width));
  add(std::to_string(cfg.field.skip_layer));
  add(std::to_string(cfg.field.dir_hidden));
  add(std::to_string(cfg.field.levels));
  for (int j = 0; j < cfg.prefilter.levels(); ++j) {
    add(std::to_string(cfg.prefilter.gammas(j)));
    add(std::to_string(cfg.prefilter.sigmas_px(j)));
  }
  add(std::to_string(cfg.train.schedule.total_steps));
  add(std::to_string(cfg.train.schedule.batch_rays));
  add(std::to_string(cfg.train.n_primary));
  add(std::to_string(cfg.train.n_secondary));
  add(std::to_string(cfg.seed));
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : repr) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
constexpr char kCkptMagic[9] = {'I', 'B', 'L', 'C', 'K', 'P', 'T', '1', '\n'};

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint: unexpected end of payload");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}
}  // namespace

void save_checkpoint(const FieldParams<float>& params, const Vec3f& bounds_min,
                     const Vec3f& bounds_max, int step, std::uint64_t cfg_hash,
                     const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
  os.write(kCkptMagic, 9);
  put_u32(os, std::uint32_t(params.layout.size()));
  for (const TensorInfo& info : params.layout) {
    put_u32(os, std::uint32_t(info.rows));
    put_u32(os, std::uint32_t(info.cols));
  }
  os.write(reinterpret_cast<const char*>(params.flat.data()),
           std::streamsize(params.flat.size() * 4));

  json meta;
  meta["step"] = step;
  meta["config_hash"] = cfg_hash;
  meta["field"] = {{"pos_encoding_order", params.config.pos_encoding_order},
                   {"dir_encoding_order", params.config.dir_encoding_order},
                   {"trunk_depth", params.config.trunk_depth},
                   {"trunk_width", params.config.trunk_width},
                   {"skip_layer", params.config.skip_layer},
                   {"dir_hidden", params.config.dir_hidden},
                   {"levels", params.config.levels}};
  meta["bounds_min"] = {bounds_min(0), bounds_min(1), bounds_min(2)};
  meta["bounds_max"] = {bounds_max(0), bounds_max(1), bounds_max(2)};
  const std::string text = meta.dump();
  put_u32(os, std::uint32_t(text.size()));
  os.write(text.data(), std::streamsize(text.size()));
  if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

MlpField<float> load_checkpoint(const std::string& path, CheckpointMeta* meta_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[9];
  is.read(magic, 9);
  if (!is || std::memcmp(magic, kCkptMagic, 9) != 0)
    throw std::runtime_error("load_checkpoint: bad magic (checkpoint version mismatch)");
  const std::uint32_t count = get_u32(is);
  if (count > 4096) throw std::runtime_error("load_checkpoint: implausible tensor count");
  std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes(count);
  std::size_t total = 0;
  for (auto& [r, c] : shapes) {
    r = get_u32(is);
    c = get_u32(is);
    total += std::size_t(r) * c;
  }
  VecX<float> flat{Eigen::Index(total)};
  is.read(reinterpret_cast<char*>(flat.data()), std::streamsize(total * 4));
  if (!is) throw std::runtime_error("checkpoint: unexpected end of payload");
  if (!flat.allFinite()) throw std::runtime_error("load_checkpoint: non-finite parameter");
  const std::uint32_t meta_len = get_u32(is);
  std::string text(meta_len, '\0');
  is.read(text.data(), meta_len);
  if (!is) throw std::runtime_error("checkpoint: unexpected end of payload");
  const json meta = json::parse(text);

  FieldConfig fc;
  const json& f = meta.at("field");
  fc.pos_encoding_order = f.at("pos_encoding_order");
  fc.dir_encoding_order = f.at("dir_encoding_order");
  fc.trunk_depth = f.at("trunk_depth");
  fc.trunk_width = f.at("trunk_width");
  fc.skip_layer = f.at("skip_layer");
  fc.dir_hidden = f.at("dir_hidden");
  fc.levels = f.at("levels");

  FieldParams<float> params = FieldParams<float>::zeros(fc);
  if (params.layout.size() != shapes.size())
    throw std::runtime_error("load_checkpoint: shape table does not match configuration");
  for (size_t i = 0; i < shapes.size(); ++i)
    if (int(shapes[i].first) != params.layout[i].rows ||
        int(shapes[i].second) != params.layout[i].cols)
      throw std::runtime_error("load_checkpoint: shape table does not match configuration");
  params.flat = flat;

  const Vec3d bmin = json_vec3(meta.at("bounds_min"));
  const Vec3d bmax = json_vec3(meta.at("bounds_max"));
  if (meta_out) {
    meta_out->step = meta.at("step");
    meta_out->config_hash = meta.at("config_hash");
    meta_out->field = fc;
    meta_out->bounds_min = bmin;
    meta_out->bounds_max = bmax;
  }
  return MlpField<float>(std::move(params), bmin.cast<float>(), bmax.cast<float>());
}

// ---------------------------------------------------------------------------
// Trainer dataset preparation

TrainData prepare_train_data(const FrameSet& set, const PrefilterSpec& spec, bool want_priors) {
  TrainData data;
  double irr_sum = 0.0;
  std::int64_t irr_count = 0;
  bool all_priors = true;
  for (size_t i : set.split_indices("train")) {
    const FrameRecord& fr = set.frames[i];
    TrainView view;
    view.camera = set.camera_of(i);
    const Image img = read_pfm(set.resolve(fr.image));
    for (int j = 0; j < spec.levels(); ++j)
      view.blurred.push_back(gaussian_prefilter(img, j, spec));
    if (want_priors && fr.albedo_prior && fr.irr_prior) {
      view.albedo_prior = read_pfm(set.resolve(*fr.albedo_prior));
      view.irr_prior = read_pfm(set.resolve(*fr.irr_prior));
      irr_sum += double(view.irr_prior->planes[0].sum());
      irr_count += view.irr_prior->planes[0].size();
    } else {
      all_priors = false;
    }
    data.views.push_back(std::move(view));
  }
  if (data.views.empty()) throw std::runtime_error("prepare_train_data: no train frames");
  data.has_priors = want_priors && all_priors;
  data.mean_irr = irr_count > 0 ? irr_sum / double(irr_count) : 0.0;
  return data;
}

// ---------------------------------------------------------------------------
// Dataset generation

FrameSet generate_dataset(const AnalyticScene& scene, const ScenegenOptions& opts,
                          const std::string& out_dir) {
  scene.validate();
  fs::create_directories(out_dir);
  const Vec3d diag = scene.bounds_max - scene.bounds_min;
  const Vec3d center = 0.5 * (scene.bounds_min + scene.bounds_max);
  const Vec3d inner = 0.33 * diag;

  FrameSet set;
  set.base_dir = out_dir;
  set.t_near = 0.02 * diag.norm();
  set.t_far = 1.05 * diag.norm();
  set.bounds_min = scene.bounds_min;
  set.bounds_max = scene.bounds_max;
  set.background = scene.background.cast<float>();

  const int total = opts.train_views + opts.test_views;
  RenderRefOptions ropts;
  ropts.spp = opts.spp;
  ropts.n_cos = opts.n_cos;
  ropts.n_ggx = opts.n_ggx;
  ropts.n_irr = opts.n_irr;

  for (int v = 0; v < total; ++v) {
    Prng rng(opts.seed, 0xCA11, std::uint64_t(v));
    // Camera position and look-at target sampled inside the scene volume.
    Vec3d eye, target;
    do {
      eye = center + Vec3d(inner.x() * (2 * rng.next_double() - 1),
                           inner.y() * (2 * rng.next_double() - 1),
                           inner.z() * (2 * rng.next_double() - 1));
      target = center + Vec3d(0.8 * inner.x() * (2 * rng.next_double() - 1),
                              0.8 * inner.y() * (2 * rng.next_double() - 1),
                              0.8 * inner.z() * (2 * rng.next_double() - 1));
    } while ((target - eye).norm() < 0.25 * diag.norm());
    const double focal = 0.8 * opts.width;
    const Camera cam = Camera::look_at(eye, target, Vec3d(0, 1, 0), focal, opts.width,
                                       opts.height, set.t_near, set.t_far);

    const RefFrame ref = render_reference(scene, cam, opts.spp, hash_combine(opts.seed, v), ropts);

    char name[64];
    std::snprintf(name, sizeof name, "frame_%03d", v);
    const std::string stem = name;
    auto save = [&](const Image& img, const char* suffix) {
      const std::string rel = stem + "_" + suffix + ".pfm";
      write_pfm(img, (fs::path(out_dir) / rel).string());
      return rel;
    };

    FrameRecord fr;
    fr.image = save(ref.beauty, "beauty");
    fr.camera_to_world = cam.cam_to_world;
    fr.focal_px = focal;
    fr.width = opts.width;
    fr.height = opts.height;
    fr.split = v < opts.train_views ? "train" : "test";
    fr.aov_albedo = save(ref.albedo, "aov_albedo");
    fr.aov_roughness = save(ref.roughness, "aov_roughness");
    fr.aov_normal = save(ref.normal, "aov_normal");
    fr.aov_depth = save(ref.depth, "aov_depth");
    fr.aov_irradiance = save(ref.irradiance, "aov_irradiance");

    // Pseudo priors: ground-truth AOVs, optionally corrupted with one
    // multiplicative factor per view (single-image decompositions are
    // inconsistent across viewpoints).
    Image albedo_prior = ref.albedo;
    Image irr_prior = ref.irradiance;
    if (opts.prior_noise > 0.0) {
      Prng nrng(opts.seed, 0x9015E, std::uint64_t(v));
      for (auto& plane : albedo_prior.planes) {
        const float f = float(1.0 + opts.prior_noise * (2.0 * nrng.next_double() - 1.0));
        plane = (plane * f).cwiseMin(1.0f).cwiseMax(0.0f);
      }
      const float f = float(1.0 + opts.prior_noise * (2.0 * nrng.next_double() - 1.0));
      irr_prior.planes[0] = (irr_prior.planes[0] * f).cwiseMax(0.0f);
    }
    fr.albedo_prior = save(albedo_prior, "albedo_prior");
    fr.irr_prior = save(irr_prior, "irr_prior");

    set.frames.push_back(std::move(fr));
  }
  save_manifest(set, (fs::path(out_dir) / "manifest.json").string());
  return set;
}

// ---------------------------------------------------------------------------
// Metrics

MetricsLog::MetricsLog(const std::string& path) : path_(path) {
  std::ofstream os(path_, std::ios::trunc);
  if (!os) throw std::runtime_error("MetricsLog: cannot open " + path_);
}

void MetricsLog::append(const StepStats<float>& stats) {
  append(stats.step, stats.phase, stats.parts.render, stats.parts.pref, stats.parts.prior,
         stats.parts.ireg, stats.total, stats.wall_ms);
}

void MetricsLog::append(int step, int phase, double render, double pref, double prior,
                        double ireg, double total, double wall_ms) {
  json j;
  j["step"] = step;
  j["phase"] = phase;
  j["render"] = render;
  j["pref"] = pref;
  j["prior"] = prior;
  j["ireg"] = ireg;
  j["total"] = total;
  j["wall_ms"] = wall_ms;
  std::ofstream os(path_, std::ios::app);
  os << j.dump() << '\n';
}

}  // namespace iblkit
