// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Order-specific cumulative cross-entropy against an exact reference joint,
// broken into per-step conditional KL terms, plus ranking and context strata.

#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "curlgauge/model.hpp"
#include "curlgauge/permutation.hpp"
#include "curlgauge/tabular.hpp"

namespace curlgauge {

inline constexpr std::size_t kMaxRankedOrders = 120;

enum class Stratum { prefix_like, random_mask, high_entropy };

std::string to_string(Stratum s);

// One local conditional visited by an order: position pi_m conditioned on
// x_S plus one setting of the earlier block positions.
struct ContextRecord {
  std::size_t step = 0;
  int position = 0;
  std::vector<int> conditioning;  // block positions already resolved, sorted
  Assignment context;
  double weight = 0.0;          // p(x_{pi_<m} | x_S)
  double local_error = 0.0;     // KL(p(X_i|C) || q(X_i|C))
  double oracle_entropy = 0.0;  // H(q(X_i|C))
  bool prefix_like = false;
};

struct StratumStats {
  std::size_t count = 0;
  double weight = 0.0;
  double mean_kl = 0.0;
};

// Empty strata are simply absent from the map.
using StrataReport = std::map<Stratum, StratumStats>;

struct OrderErrorProfile {
  Order order;
  double cross_entropy = 0.0;        // E_p[-log Q^pi]
  double conditional_entropy = 0.0;  // H_p(X_B | x_S)
  double kl_total = 0.0;             // KL(p || Q^pi), enumerated directly
  std::vector<double> per_step_kl;
  StrataReport context_strata;
  std::vector<ContextRecord> records;
};

OrderErrorProfile order_cross_entropy(const ConditionalOracle& oracle, const TabularJointModel& joint,
                                      const PartialContext& context, const Order& order);

// KL(p(X_i | x_C) || q(X_i | x_C)) for the visible context C.
double local_estimation_error(const ConditionalOracle& oracle, const TabularJointModel& joint,
                              const Assignment& context, int i);

// Ascending kl_total; values within 1e-12 nats tie and fall back to the
// lexicographic order of the permutation.
std::vector<OrderErrorProfile> rank_orders(const ConditionalOracle& oracle, const TabularJointModel& joint,
                                           const PartialContext& context, std::span<const Order> candidates);

// Prefix-like steps condition on exactly the block positions below the
// target; every other step is random-mask (the two partition all steps).
// High-entropy is an overlay: records whose oracle entropy exceeds the
// median over all supplied records. Means are weighted by p.
StrataReport stratify_contexts(std::span<const OrderErrorProfile> profiles);

}  // namespace curlgauge
