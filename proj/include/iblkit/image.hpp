// Copyright (c) 2026 The iblkit Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "iblkit/common.hpp"

namespace iblkit {

// Planar float image, planes[c](y, x). One plane for grayscale, three for
// color. Linear radiance everywhere; gamma is applied only at PNG export.
struct Image {
  int width = 0, height = 0;
  std::vector<Eigen::ArrayXXf> planes;

  static Image zeros(int width, int height, int channels) {
    Image img;
    img.width = width;
    img.height = height;
    img.planes.assign(size_t(channels), Eigen::ArrayXXf::Zero(height, width));
    return img;
  }

  int channels() const { return int(planes.size()); }

  Rgbf rgb(int y, int x) const {
    if (planes.size() == 1) return Rgbf::Constant(planes[0](y, x));
    return Rgbf(planes[0](y, x), planes[1](y, x), planes[2](y, x));
  }

  void set_rgb(int y, int x, const Rgbf& v) {
    for (int c = 0; c < channels(); ++c) planes[size_t(c)](y, x) = v(std::min(c, 2));
  }

  float gray(int y, int x) const {
    float sum = 0;
    for (const auto& p : planes) sum += p(y, x);
    return sum / float(planes.size());
  }

  bool finite() const {
    for (const auto& p : planes)
      if (!p.isFinite().all()) return false;
    return true;
  }
};

// PFM: "PF"/"Pf" header, negative scale = little-endian floats, rows stored
// bottom-up. Lossless roundtrip.
void write_pfm(const Image& img, const std::string& path);
Image read_pfm(const std::string& path);

// 8-bit RGB PNG for display: gamma 1/2.2, clamped to [0,1].
void export_png(const Image& img, const std::string& path);

float psnr(const Image& a, const Image& b);
float mean_abs_error(const Image& a, const Image& b);

}  // namespace iblkit
