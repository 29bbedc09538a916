// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0

#include "curlgauge/order_error.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "curlgauge/dependence.hpp"
#include "curlgauge/error.hpp"
#include "curlgauge/numeric.hpp"
#include "curlgauge/parallel.hpp"

namespace curlgauge {

namespace {

constexpr double kIdentityTolerance = 1e-10;
constexpr double kTieQuantum = 1e-12;

void check_shapes(const ConditionalOracle& oracle, const TabularJointModel& joint) {
  if (oracle.positions() != joint.positions() || oracle.vocabulary() != joint.vocabulary()) {
    throw DimensionError("oracle and joint disagree on shape");
  }
}

}  // namespace

std::string to_string(Stratum s) {
  switch (s) {
    case Stratum::prefix_like:
      return "prefix-like";
    case Stratum::random_mask:
      return "random-mask";
    case Stratum::high_entropy:
      return "high-entropy";
  }
  return "unknown";
}

OrderErrorProfile order_cross_entropy(const ConditionalOracle& oracle, const TabularJointModel& joint,
                                      const PartialContext& context, const Order& order) {
  check_shapes(oracle, joint);
  const BlockDistribution dist(joint, context);
  if (!is_permutation_of(order, dist.block())) {
    throw ContractViolation(fmt::format("order {} is not a permutation of the block", order));
  }
  const int v = dist.vocab_size();
  const auto vs = static_cast<std::size_t>(v);
  const std::size_t n = order.size();
  const Assignment base = context.visible(joint.positions());

  // prefix index at step m: mixed radix over tokens of order[0..m)
  auto prefix_index = [&](const Assignment& x, std::size_t m) {
    std::size_t idx = 0;
    for (std::size_t k = 0; k < m; ++k) idx = idx * vs + static_cast<std::size_t>(x[order[k]]);
    return idx;
  };

  // p(prefix, x_{pi_m} = a | x_S) accumulated from the block table.
  std::vector<std::vector<double>> p_table(n);
  std::size_t prefixes = 1;
  for (std::size_t m = 0; m < n; ++m) {
    p_table[m].assign(prefixes * vs, 0.0);
    prefixes *= vs;
  }
  for (std::size_t k = 0; k < dist.size(); ++k) {
    const double w = std::exp(dist.log_prob(k));
    const Assignment& x = dist.assignment(k);
    for (std::size_t m = 0; m < n; ++m) {
      p_table[m][prefix_index(x, m) * vs + static_cast<std::size_t>(x[order[m]])] += w;
    }
  }

  OrderErrorProfile out;
  out.order = order;
  out.per_step_kl.assign(n, 0.0);
  std::vector<std::vector<double>> q_table(n);
  std::vector<int> sorted_block = dist.block();

  prefixes = 1;
  for (std::size_t m = 0; m < n; ++m) {
    q_table[m].resize(prefixes * vs);
    const int target = order[m];
    std::vector<int> conditioning(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m));
    std::sort(conditioning.begin(), conditioning.end());
    std::vector<int> below;
    for (int b : sorted_block) {
      if (b < target) below.push_back(b);
    }
    const bool prefix_like = conditioning == below;

    std::vector<int> earlier(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m));
    std::size_t idx = 0;
    for_each_completion(base, earlier, v, [&](const Assignment& visible) {
      std::span<double> q(q_table[m].data() + idx * vs, vs);
      oracle.log_conditional(target, visible, q);
      std::vector<double> p_cond(vs);
      double mass = 0.0;
      for (std::size_t a = 0; a < vs; ++a) mass += p_table[m][idx * vs + a];
      for (std::size_t a = 0; a < vs; ++a) p_cond[a] = std::log(p_table[m][idx * vs + a] / mass);

      ContextRecord rec;
      rec.step = m;
      rec.position = target;
      rec.conditioning = conditioning;
      rec.context = visible;
      rec.weight = mass;
      rec.local_error = std::max(0.0, kl_from_logs(p_cond, q));
      rec.oracle_entropy = entropy_from_logs(q);
      rec.prefix_like = prefix_like;
      out.per_step_kl[m] += mass * rec.local_error;
      out.records.push_back(std::move(rec));
      ++idx;
    });
    prefixes *= vs;
  }

  std::vector<double> joint_logs(dist.size());
  for (std::size_t k = 0; k < dist.size(); ++k) {
    const Assignment& x = dist.assignment(k);
    const double lp = dist.log_prob(k);
    joint_logs[k] = lp;
    double lq = 0.0;
    for (std::size_t m = 0; m < n; ++m) {
      lq += q_table[m][prefix_index(x, m) * vs + static_cast<std::size_t>(x[order[m]])];
    }
    const double w = std::exp(lp);
    out.cross_entropy -= w * lq;
    out.kl_total += w * (lp - lq);
  }
  out.conditional_entropy = entropy_from_logs(joint_logs);

  double step_sum = 0.0;
  for (double s : out.per_step_kl) step_sum += s;
  const double scale = std::max(1.0, std::abs(out.cross_entropy));
  if (std::abs(out.cross_entropy - out.conditional_entropy - out.kl_total) > kIdentityTolerance * scale) {
    throw Error(fmt::format("cross-entropy identity violated: {} vs {} + {}", out.cross_entropy,
                            out.conditional_entropy, out.kl_total));
  }
  if (std::abs(out.kl_total - step_sum) > kIdentityTolerance * scale) {
    throw Error(fmt::format("per-step decomposition violated: {} vs {}", out.kl_total, step_sum));
  }
  const OrderErrorProfile* self = &out;
  out.context_strata = stratify_contexts(std::span<const OrderErrorProfile>(self, 1));
  return out;
}

double local_estimation_error(const ConditionalOracle& oracle, const TabularJointModel& joint,
                              const Assignment& context, int i) {
  check_shapes(oracle, joint);
  if (context.size() != joint.positions()) throw DimensionError("context length does not match the model");
  if (context.is_set(i)) throw ContractViolation(fmt::format("position {} is already resolved", i));
  const auto q = oracle.log_conditional(i, context);
  std::vector<double> p(static_cast<std::size_t>(joint.vocabulary().size()));
  const double norm = joint.log_marginal(context);
  Assignment with = context;
  for (std::size_t a = 0; a < p.size(); ++a) {
    with.set(i, static_cast<int>(a));
    p[a] = joint.log_marginal(with) - norm;
  }
  return std::max(0.0, kl_from_logs(p, q));
}

std::vector<OrderErrorProfile> rank_orders(const ConditionalOracle& oracle, const TabularJointModel& joint,
                                           const PartialContext& context, std::span<const Order> candidates) {
  if (candidates.empty()) throw ContractViolation("no candidate orders to rank");
  if (candidates.size() > kMaxRankedOrders) {
    throw CapExceeded(fmt::format("{} candidate orders (cap {})", candidates.size(), kMaxRankedOrders));
  }
  std::vector<OrderErrorProfile> profiles(candidates.size());
  parallel_for(candidates.size(),
               [&](std::size_t k) { profiles[k] = order_cross_entropy(oracle, joint, context, candidates[k]); });
  auto key = [](double kl) { return std::llround(kl / kTieQuantum); };
  std::stable_sort(profiles.begin(), profiles.end(), [&](const OrderErrorProfile& x, const OrderErrorProfile& y) {
    const auto kx = key(x.kl_total);
    const auto ky = key(y.kl_total);
    if (kx != ky) return kx < ky;
    return x.order < y.order;
  });
  return profiles;
}

StrataReport stratify_contexts(std::span<const OrderErrorProfile> profiles) {
  std::vector<double> entropies;
  for (const auto& p : profiles) {
    for (const auto& r : p.records) entropies.push_back(r.oracle_entropy);
  }
  StrataReport out;
  if (entropies.empty()) return out;
  std::sort(entropies.begin(), entropies.end());
  const std::size_t h = entropies.size() / 2;
  const double median = entropies.size() % 2 ? entropies[h] : 0.5 * (entropies[h - 1] + entropies[h]);

  std::map<Stratum, double> weighted;
  auto add = [&](Stratum s, const ContextRecord& r) {
    auto& st = out[s];
    ++st.count;
    st.weight += r.weight;
    weighted[s] += r.weight * r.local_error;
  };
  for (const auto& p : profiles) {
    for (const auto& r : p.records) {
      add(r.prefix_like ? Stratum::prefix_like : Stratum::random_mask, r);
      if (r.oracle_entropy > median) add(Stratum::high_entropy, r);
    }
  }
  for (auto& [s, st] : out) st.mean_kl = st.weight > 0.0 ? weighted[s] / st.weight : 0.0;
  return out;
}

}  // namespace curlgauge
