// Copyright (c) 2026 The iblkit Authors.
// SPDX-License-Identifier: Apache-2.0

#include "iblkit/common.hpp"

namespace iblkit {

namespace {
std::atomic<int> g_threads{0};
}

int thread_count() {
  int n = g_threads.load(std::memory_order_relaxed);
  if (n > 0) return n;
  if (const char* env = std::getenv("IBLKIT_THREADS")) {
    const int parsed = std::atoi(env);
    if (parsed > 0) return parsed;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? int(hw) : 1;
}

void set_thread_count(int n) { g_threads.store(n, std::memory_order_relaxed); }

namespace diag {
std::atomic<std::uint64_t> fresnel_clamps{0};
}

}  // namespace iblkit
