// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Conditional dependence inside a block: total correlation, the gap paid by
// one-shot independent parallel updates, and pairwise conditional MI.

#pragma once

#include <map>
#include <utility>
#include <vector>

#include "curlgauge/model.hpp"
#include "curlgauge/tabular.hpp"

namespace curlgauge {

inline constexpr std::size_t kMaxBlockStates = 262144;

// p(x_B | x_S) tabulated over the block (positions sorted, last fastest).
class BlockDistribution {
 public:
  BlockDistribution(const TabularJointModel& joint, const PartialContext& context);

  const std::vector<int>& block() const { return block_; }
  int vocab_size() const { return vocab_; }
  std::size_t size() const { return log_p_.size(); }
  double log_prob(std::size_t k) const { return log_p_[k]; }
  const Assignment& assignment(std::size_t k) const { return states_[k]; }

  // log p(x_{block[slot]} = . | x_S), obtained by summing the block table.
  std::vector<double> marginal(std::size_t slot) const;
  // log p(x_s = a, x_t = b | x_S) laid out [a * V + b].
  std::vector<double> pair_marginal(std::size_t slot_s, std::size_t slot_t) const;

 private:
  std::vector<int> block_;
  int vocab_;
  std::vector<Assignment> states_;
  std::vector<double> log_p_;
};

// KL(p(x_B|x_S) || prod_i p(x_i|x_S)). The entropy form is computed
// separately and the two must agree within 1e-10.
double total_correlation(const TabularJointModel& joint, const PartialContext& context);

// Both forms, for callers that want to inspect them.
struct TotalCorrelationForms {
  double kl_form = 0.0;
  double sum_marginal_entropies = 0.0;
  double joint_entropy = 0.0;
  double entropy_form() const { return sum_marginal_entropies - joint_entropy; }
};
TotalCorrelationForms total_correlation_forms(const TabularJointModel& joint, const PartialContext& context);

// KL(p(x_B|x_S) || prod_i q(x_i|x_S)) by exact enumeration. Returns +inf if
// q assigns zero mass where p does not.
double independent_parallel_gap(const ConditionalOracle& oracle, const TabularJointModel& joint,
                                const PartialContext& context);

using PairMap = std::map<std::pair<int, int>, double>;

// I(X_i; X_j | x_S) for every unordered block pair (i < j).
PairMap pairwise_cmi(const TabularJointModel& joint, const PartialContext& context);

struct DependenceReport {
  double tc = 0.0;
  double sum_marginal_entropies = 0.0;
  double joint_entropy = 0.0;
  double independent_parallel_kl = 0.0;
  PairMap pairwise_cmi;
  double sum_pairwise_cmi = 0.0;
  // sum of pairwise CMI minus TC; reported, never bounded.
  double cmi_proxy_gap = 0.0;
};

DependenceReport dependence_report(const ConditionalOracle& oracle, const TabularJointModel& joint,
                                   const PartialContext& context);

}  // namespace curlgauge
