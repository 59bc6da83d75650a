// Copyright (c) 2026 The iblkit Authors.
// SPDX-License-Identifier: Apache-2.0

#include "iblkit/shade.hpp"

#include <fstream>

#include <json.hpp>

namespace iblkit {

EditSpec load_edits(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_edits: cannot open " + path);
  nlohmann::json j;
  is >> j;
  EditSpec spec;
  auto vec3f = [](const nlohmann::json& a) {
    return Vec3f(float(a.at(0)), float(a.at(1)), float(a.at(2)));
  };
  for (const auto& rj : j.value("regions", nlohmann::json::array())) {
    RegionEdit re;
    if (rj.contains("box_min")) re.box_min = vec3f(rj.at("box_min"));
    if (rj.contains("box_max")) re.box_max = vec3f(rj.at("box_max"));
    if (rj.contains("mask_path")) re.mask_path = rj.at("mask_path").get<std::string>();
    if (rj.contains("set_albedo")) re.set_albedo = Rgbf(vec3f(rj.at("set_albedo")).array());
    if (rj.contains("set_roughness")) re.set_roughness = float(rj.at("set_roughness"));
    if (bool(re.box_min) != bool(re.box_max))
      throw std::runtime_error("load_edits: box selector needs both box_min and box_max");
    if (!re.box_min && !re.mask_path)
      throw std::runtime_error("load_edits: region needs a box or mask selector");
    if (re.set_roughness && (*re.set_roughness < 0.0f || *re.set_roughness > 1.0f))
      throw std::runtime_error("load_edits: roughness override outside [0, 1]");
    spec.regions.push_back(std::move(re));
  }
  for (const auto& oj : j.value("objects", nlohmann::json::array())) {
    ObjectEdit oe;
    const auto& sj = oj.at("sdf");
    const std::string kind = sj.at("type");
    if (kind == "sphere") {
      oe.sdf.kind = SdfPrimitive::Kind::Sphere;
      oe.sdf.radius = float(sj.at("radius"));
    } else if (kind == "box") {
      oe.sdf.kind = SdfPrimitive::Kind::Box;
      oe.sdf.extent = vec3f(sj.at("extent"));
      oe.sdf.rounding = float(sj.value("rounding", 0.0));
    } else {
      throw std::runtime_error("load_edits: unknown sdf type '" + kind + "'");
    }
    oe.sdf.center = vec3f(sj.at("center"));
    if (oj.contains("albedo")) oe.albedo = Rgbf(vec3f(oj.at("albedo")).array());
    if (oj.contains("roughness")) oe.roughness = float(oj.at("roughness"));
    oe.alpha = float(oj.value("alpha", 0.0));
    if (oe.alpha < 0.0f || oe.alpha > 1.0f)
      throw std::runtime_error("load_edits: alpha outside [0, 1]");
    spec.objects.push_back(std::move(oe));
  }
  return spec;
}

}  // namespace iblkit
