// Copyright (c) 2026 The iblkit Authors.
// SPDX-License-Identifier: Apache-2.0

#include "iblkit/lut.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "iblkit/sampling.hpp"

namespace iblkit {

std::pair<double, double> lut_cell_estimate(double cos_theta, double gamma, int samples,
                                            std::uint64_t seed) {
  const double alpha = gamma * gamma;
  const double k = alpha / 2.0;
  const double sin_v = std::sqrt(std::max(0.0, 1.0 - cos_theta * cos_theta));
  const Vec3d v(sin_v, 0.0, cos_theta);
  auto g1 = [k](double c) { return c / (c * (1.0 - k) + k); };

  // Hammersley points with a seeded Cranley-Patterson rotation: keeps the
  // per-cell error well under the oracle-equivalence tolerance while staying
  // deterministic per seed.
  Prng rng(seed);
  const double rot1 = rng.next_double();
  const double rot2 = rng.next_double();
  auto radical_inverse = [](std::uint32_t bits) {
    bits = (bits << 16) | (bits >> 16);
    bits = ((bits & 0x55555555u) << 1) | ((bits & 0xAAAAAAAAu) >> 1);
    bits = ((bits & 0x33333333u) << 2) | ((bits & 0xCCCCCCCCu) >> 2);
    bits = ((bits & 0x0F0F0F0Fu) << 4) | ((bits & 0xF0F0F0F0u) >> 4);
    bits = ((bits & 0x00FF00FFu) << 8) | ((bits & 0xFF00FF00u) >> 8);
    return double(bits) * 0x1.0p-32;
  };

  double scale = 0.0, bias = 0.0;
  for (int s = 0; s < samples; ++s) {
    double u1 = (s + 0.5) / samples + rot1;
    u1 -= std::floor(u1);
    double u2 = radical_inverse(std::uint32_t(s)) + rot2;
    u2 -= std::floor(u2);
    const Vec3d h = ggx_sample(u1, u2, gamma).h;
    const double v_dot_h = v.dot(h);
    if (v_dot_h <= 0.0) continue;
    const Vec3d wi = 2.0 * v_dot_h * h - v;
    if (wi.z() <= 0.0) continue;
    // f_spec/F * (n.wi) / pdf(wi) collapses to G (v.h) / ((n.v)(n.h)).
    const double g = g1(wi.z()) * g1(cos_theta);
    const double common = g * v_dot_h / (cos_theta * h.z());
    const double c0 = 1.0 - v_dot_h;
    const double c2 = c0 * c0;
    const double fc = c2 * c2 * c0;
    scale += (1.0 - fc) * common;
    bias += fc * common;
  }
  return {scale / samples, bias / samples};
}

BrdfLut compute_lut(int resolution, int samples_per_cell, std::uint64_t seed) {
  if (resolution < 2) throw std::invalid_argument("compute_lut: resolution must be >= 2");
  if (samples_per_cell < 1) throw std::invalid_argument("compute_lut: need at least one sample");
  BrdfLut lut;
  lut.resolution = resolution;
  lut.scale.resize(resolution, resolution);
  lut.bias.resize(resolution, resolution);
  parallel_for(std::int64_t(resolution) * resolution, [&](std::int64_t cell) {
    const int i = int(cell / resolution);
    const int j = int(cell % resolution);
    const auto [s, b] = lut_cell_estimate(lut.cos_center(i), lut.gamma_center(j),
                                          samples_per_cell, hash_combine(seed, cell));
    lut.scale(i, j) = float(s);
    lut.bias(i, j) = float(b);
  });
  return lut;
}

namespace {
constexpr char kMagic[8] = {'I', 'B', 'L', 'L', 'U', 'T', '1', '\n'};

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("unexpected end of LUT payload");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

void put_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

float get_f32(std::istream& is) {
  const std::uint32_t bits = get_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}
}  // namespace

void save_lut(const BrdfLut& lut, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_lut: cannot open " + path);
  os.write(kMagic, 8);
  put_u32(os, std::uint32_t(lut.resolution));
  put_u32(os, 0);
  for (int i = 0; i < lut.resolution; ++i)
    for (int j = 0; j < lut.resolution; ++j) {
      put_f32(os, lut.scale(i, j));
      put_f32(os, lut.bias(i, j));
    }
  if (!os) throw std::runtime_error("save_lut: write failed for " + path);
}

BrdfLut load_lut(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_lut: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("load_lut: bad magic (LUT version mismatch)");
  BrdfLut lut;
  lut.resolution = int(get_u32(is));
  if (lut.resolution < 2 || lut.resolution > 1 << 16)
    throw std::runtime_error("load_lut: implausible resolution");
  get_u32(is);  // reserved
  lut.scale.resize(lut.resolution, lut.resolution);
  lut.bias.resize(lut.resolution, lut.resolution);
  for (int i = 0; i < lut.resolution; ++i)
    for (int j = 0; j < lut.resolution; ++j) {
      const float s = get_f32(is);
      const float b = get_f32(is);
      if (!std::isfinite(s) || !std::isfinite(b))
        throw std::runtime_error("load_lut: non-finite LUT entry");
      lut.scale(i, j) = s;
      lut.bias(i, j) = b;
    }
  return lut;
}

}  // namespace iblkit
