// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0

#include "curlgauge/parallel.hpp"

#include <cstdlib>
#include <string>

namespace curlgauge {

unsigned worker_count() {
  if (const char* env = std::getenv("CURLGAUGE_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (...) {
      // Unparseable values fall back to the hardware default.
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace curlgauge
