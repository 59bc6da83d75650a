// Copyright (c) 2026 The iblkit Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace iblkit {

template <typename S>
using Vec3 = Eigen::Matrix<S, 3, 1>;
template <typename S>
using Vec2 = Eigen::Matrix<S, 2, 1>;
template <typename S>
using Rgb = Eigen::Array<S, 3, 1>;
template <typename S>
using Mat4 = Eigen::Matrix<S, 4, 4>;

using Vec3f = Vec3<float>;
using Vec3d = Vec3<double>;
using Rgbf = Rgb<float>;
using Rgbd = Rgb<double>;
using Mat4f = Mat4<float>;

template <typename S>
inline constexpr S kPi = S(3.14159265358979323846);

// Roughness floor: gamma = 0 is a delta lobe (perfect mirror), clamped away
// everywhere the GGX density or its sampler is evaluated.
inline constexpr double kGammaMin = 0.02;

template <typename S>
S clamp01(S x) {
  return std::min(S(1), std::max(S(0), x));
}

template <typename S>
S lerp(S a, S b, S t) {
  return a + (b - a) * t;
}

template <typename S>
Vec3<S> reflect(const Vec3<S>& w, const Vec3<S>& n) {
  return S(2) * n.dot(w) * n - w;
}

// Right-handed orthonormal frame with +z = n (Duff et al. branchless variant).
template <typename S>
struct Frame {
  Vec3<S> t, b, n;

  explicit Frame(const Vec3<S>& normal) : n(normal) {
    const S sign = std::copysign(S(1), n.z());
    const S a = S(-1) / (sign + n.z());
    const S bxy = n.x() * n.y() * a;
    t = Vec3<S>(S(1) + sign * n.x() * n.x() * a, sign * bxy, -sign * n.x());
    b = Vec3<S>(bxy, sign + n.y() * n.y() * a, -n.y());
  }

  Vec3<S> to_world(const Vec3<S>& v) const { return v.x() * t + v.y() * b + v.z() * n; }
  Vec3<S> to_local(const Vec3<S>& v) const { return Vec3<S>(t.dot(v), b.dot(v), n.dot(v)); }
};

// ---------------------------------------------------------------------------
// Counter-based RNG. Streams are keyed by arbitrary 64-bit words so that
// per-pixel / per-cell / per-sample draws are deterministic under any thread
// schedule.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ (0x9E3779B97F4A7C15ull + (b << 6) + (b >> 2) + splitmix64(b)));
}

class Prng {
 public:
  explicit Prng(std::uint64_t key) : key_(splitmix64(key)) {}
  Prng(std::uint64_t seed, std::uint64_t stream) : key_(hash_combine(seed, stream)) {}
  Prng(std::uint64_t seed, std::uint64_t s0, std::uint64_t s1)
      : key_(hash_combine(hash_combine(seed, s0), s1)) {}

  std::uint64_t next_u64() { return splitmix64(key_ + 0xA0761D6478BD642Full * ++ctr_); }

  std::uint32_t next_u32() { return static_cast<std::uint32_t>(next_u64() >> 32); }

  // Uniform in [0, 1).
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }
  float next_float() { return float(next_u64() >> 40) * 0x1.0p-24f; }

  template <typename S>
  S uniform() {
    if constexpr (std::is_same_v<S, float>)
      return next_float();
    else
      return next_double();
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t ctr_ = 0;
};

// ---------------------------------------------------------------------------
// Thread pool free parallel_for: splits [0, n) into contiguous chunks, one
// worker thread per chunk. Chunk boundaries depend only on (n, threads), so
// per-index work that derives randomness from the index stays deterministic.

int thread_count();
void set_thread_count(int n);

template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn, int threads = 0) {
  if (threads <= 0) threads = thread_count();
  threads = int(std::min<std::int64_t>(threads, std::max<std::int64_t>(n, 1)));
  if (threads <= 1 || n <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  const std::int64_t chunk = std::max<std::int64_t>(1, n / (threads * 8));
  auto worker = [&] {
    for (;;) {
      const std::int64_t begin = next.fetch_add(chunk);
      if (begin >= n) return;
      const std::int64_t end = std::min(begin + chunk, n);
      for (std::int64_t i = begin; i < end; ++i) fn(i);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

// Diagnostics counters for soft error paths (clamp-and-warn contracts).
namespace diag {
extern std::atomic<std::uint64_t> fresnel_clamps;
}

}  // namespace iblkit
