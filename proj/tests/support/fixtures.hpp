// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared test fixtures and brute-force reference computations. Nothing here
// calls the library's marginalization or pseudo-joint code paths.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "curlgauge/model.hpp"
#include "curlgauge/tabular.hpp"

namespace curlgauge::testing {

inline std::shared_ptr<const TabularJointModel> random_joint(std::mt19937_64& rng, int m, int v, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  std::size_t n = 1;
  for (int k = 0; k < m; ++k) n *= static_cast<std::size_t>(v);
  std::vector<double> w(n);
  for (double& x : w) x = normal(rng);
  return std::make_shared<const TabularJointModel>(TabularJointModel::from_log_weights(v, m, std::move(w), "random"));
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline double uniform_real(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Random context with a block of `block_size` positions; the rest observed.
inline PartialContext random_context(std::mt19937_64& rng, int m, int v, int block_size) {
  std::vector<int> pos(static_cast<std::size_t>(m));
  for (int p = 0; p < m; ++p) pos[static_cast<std::size_t>(p)] = p;
  std::shuffle(pos.begin(), pos.end(), rng);
  PartialContext ctx;
  ctx.block.assign(pos.begin(), pos.begin() + block_size);
  std::sort(ctx.block.begin(), ctx.block.end());
  for (auto it = pos.begin() + block_size; it != pos.end(); ++it) ctx.observed[*it] = uniform_int(rng, 0, v - 1);
  return ctx;
}

// Decodes state index s into tokens (last position fastest).
inline std::vector<int> decode_state(std::size_t s, int m, int v) {
  std::vector<int> x(static_cast<std::size_t>(m));
  for (int k = m; k-- > 0;) {
    x[static_cast<std::size_t>(k)] = static_cast<int>(s % static_cast<std::size_t>(v));
    s /= static_cast<std::size_t>(v);
  }
  return x;
}

// Probability mass of all full states agreeing with `visible`, by a linear
// scan of the joint table.
inline double brute_mass(const TabularJointModel& joint, const Assignment& visible) {
  const int m = joint.positions();
  const int v = joint.vocabulary().size();
  double total = 0.0;
  for (std::size_t s = 0; s < joint.state_count(); ++s) {
    const auto x = decode_state(s, m, v);
    bool ok = true;
    for (int p = 0; p < m && ok; ++p) ok = !visible.is_set(p) || visible[p] == x[static_cast<std::size_t>(p)];
    if (ok) total += std::exp(joint.log_mass()[s]);
  }
  return total;
}

inline double brute_conditional(const TabularJointModel& joint, int i, int a, const Assignment& visible) {
  Assignment with = visible;
  with.set(i, a);
  return std::log(brute_mass(joint, with) / brute_mass(joint, visible));
}

// Sequential product of oracle conditionals along `order`, queried one at a
// time from scratch.
inline double brute_pseudo_joint(const ConditionalOracle& oracle, const Assignment& observed,
                                 const std::vector<int>& order, const Assignment& x) {
  Assignment ctx = observed;
  double total = 0.0;
  for (int p : order) {
    total += oracle.log_conditional(p, x[p], ctx);
    ctx.set(p, x[p]);
  }
  return total;
}

}  // namespace curlgauge::testing
