// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0

#include "curlgauge/dependence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "curlgauge/error.hpp"
#include "curlgauge/numeric.hpp"

namespace curlgauge {

namespace {

void check_joint_context(const TabularJointModel& joint, const PartialContext& context) {
  context.validate(joint.positions(), joint.vocabulary());
  std::size_t states = 1;
  for (std::size_t k = 0; k < context.block.size(); ++k) states *= static_cast<std::size_t>(joint.vocabulary().size());
  if (states > kMaxBlockStates) {
    throw CapExceeded(fmt::format("block has {} assignments (cap {})", states, kMaxBlockStates));
  }
}

}  // namespace

BlockDistribution::BlockDistribution(const TabularJointModel& joint, const PartialContext& context)
    : vocab_(joint.vocabulary().size()) {
  check_joint_context(joint, context);
  block_ = context.block;
  std::sort(block_.begin(), block_.end());
  const Assignment base = context.visible(joint.positions());
  const double log_norm = joint.log_marginal(base);
  for_each_completion(base, block_, vocab_, [&](const Assignment& x) {
    states_.push_back(x);
    log_p_.push_back(joint.log_marginal(x) - log_norm);
  });
}

std::vector<double> BlockDistribution::marginal(std::size_t slot) const {
  const int position = block_.at(slot);
  std::vector<double> p(static_cast<std::size_t>(vocab_), 0.0);
  for (std::size_t k = 0; k < states_.size(); ++k) p[static_cast<std::size_t>(states_[k][position])] += std::exp(log_p_[k]);
  for (double& x : p) x = std::log(x);
  return p;
}

std::vector<double> BlockDistribution::pair_marginal(std::size_t slot_s, std::size_t slot_t) const {
  const int s = block_.at(slot_s);
  const int t = block_.at(slot_t);
  const auto v = static_cast<std::size_t>(vocab_);
  std::vector<double> p(v * v, 0.0);
  for (std::size_t k = 0; k < states_.size(); ++k) {
    p[static_cast<std::size_t>(states_[k][s]) * v + static_cast<std::size_t>(states_[k][t])] += std::exp(log_p_[k]);
  }
  for (double& x : p) x = std::log(x);
  return p;
}

TotalCorrelationForms total_correlation_forms(const TabularJointModel& joint, const PartialContext& context) {
  const BlockDistribution dist(joint, context);
  const std::size_t n = dist.block().size();
  std::vector<std::vector<double>> marginals;
  for (std::size_t s = 0; s < n; ++s) marginals.push_back(dist.marginal(s));

  TotalCorrelationForms out;
  for (std::size_t k = 0; k < dist.size(); ++k) {
    const double lp = dist.log_prob(k);
    double log_product = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      log_product += marginals[s][static_cast<std::size_t>(dist.assignment(k)[dist.block()[s]])];
    }
    out.kl_form += std::exp(lp) * (lp - log_product);
  }
  std::vector<double> joint_logs(dist.size());
  for (std::size_t k = 0; k < dist.size(); ++k) joint_logs[k] = dist.log_prob(k);
  out.joint_entropy = entropy_from_logs(joint_logs);
  for (const auto& m : marginals) out.sum_marginal_entropies += entropy_from_logs(m);
  return out;
}

double total_correlation(const TabularJointModel& joint, const PartialContext& context) {
  const auto forms = total_correlation_forms(joint, context);
  if (std::abs(forms.kl_form - forms.entropy_form()) > 1e-10) {
    throw Error(fmt::format("total correlation forms disagree: KL {} vs entropy {}", forms.kl_form,
                            forms.entropy_form()));
  }
  return forms.kl_form;
}

double independent_parallel_gap(const ConditionalOracle& oracle, const TabularJointModel& joint,
                                const PartialContext& context) {
  if (oracle.positions() != joint.positions() || oracle.vocabulary() != joint.vocabulary()) {
    throw DimensionError("oracle and joint disagree on shape");
  }
  const BlockDistribution dist(joint, context);
  const Assignment base = context.visible(joint.positions());
  std::vector<std::vector<double>> q;
  for (int p : dist.block()) q.push_back(oracle.log_conditional(p, base));
  double kl = 0.0;
  for (std::size_t k = 0; k < dist.size(); ++k) {
    const double lp = dist.log_prob(k);
    double lq = 0.0;
    for (std::size_t s = 0; s < q.size(); ++s) lq += q[s][static_cast<std::size_t>(dist.assignment(k)[dist.block()[s]])];
    if (lq == -std::numeric_limits<double>::infinity()) return std::numeric_limits<double>::infinity();
    kl += std::exp(lp) * (lp - lq);
  }
  return kl;
}

PairMap pairwise_cmi(const TabularJointModel& joint, const PartialContext& context) {
  const BlockDistribution dist(joint, context);
  const std::size_t n = dist.block().size();
  const auto v = static_cast<std::size_t>(dist.vocab_size());
  PairMap out;
  for (std::size_t s = 0; s < n; ++s) {
    const auto ms = dist.marginal(s);
    for (std::size_t t = s + 1; t < n; ++t) {
      const auto mt = dist.marginal(t);
      const auto pair = dist.pair_marginal(s, t);
      double mi = 0.0;
      for (std::size_t a = 0; a < v; ++a) {
        for (std::size_t b = 0; b < v; ++b) {
          const double lp = pair[a * v + b];
          mi += std::exp(lp) * (lp - ms[a] - mt[b]);
        }
      }
      out[{dist.block()[s], dist.block()[t]}] = mi;
    }
  }
  return out;
}

DependenceReport dependence_report(const ConditionalOracle& oracle, const TabularJointModel& joint,
                                   const PartialContext& context) {
  DependenceReport r;
  const auto forms = total_correlation_forms(joint, context);
  r.tc = total_correlation(joint, context);
  r.sum_marginal_entropies = forms.sum_marginal_entropies;
  r.joint_entropy = forms.joint_entropy;
  r.independent_parallel_kl = independent_parallel_gap(oracle, joint, context);
  r.pairwise_cmi = pairwise_cmi(joint, context);
  for (const auto& [pair, value] : r.pairwise_cmi) r.sum_pairwise_cmi += value;
  r.cmi_proxy_gap = r.sum_pairwise_cmi - r.tc;
  return r;
}

}  // namespace curlgauge
