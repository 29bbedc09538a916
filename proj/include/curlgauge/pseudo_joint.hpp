// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Order-induced pseudo-joints and the local curl between swapped orders.
//
// For a block B and an order pi, the pseudo-joint is the sequential product
//   Q^pi(x_B | x_S) = prod_m q(x_{pi_m} | x_S, x_{pi_<m}).
// The local curl at (i, j, a, b) is
//   C = log q(a|S) + log q(b|S,i=a) - log q(b|S) - log q(a|S,j=b),
// which equals log Q^{i->j}(a,b) - log Q^{j->i}(a,b).

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "curlgauge/model.hpp"
#include "curlgauge/numeric.hpp"
#include "curlgauge/permutation.hpp"

namespace curlgauge {

inline constexpr double kDefaultCurlEpsilon = 1e-6;
inline constexpr double kConsistencyTolerance = 1e-8;
inline constexpr int kMaxConsistencyBlock = 5;
inline constexpr std::size_t kMaxConsistencyAssignments = 32768;

struct PseudoJointSpec {
  PartialContext context;
  Order order;

  void validate(int positions, const Vocabulary& vocab) const;
};

// assignment must carry a token for every block position.
double pseudo_joint_log_prob(const ConditionalOracle& oracle, const PseudoJointSpec& spec,
                             const Assignment& assignment);

struct CurlSample {
  int i = 0;
  int j = 0;
  int a = 0;
  int b = 0;
  Assignment context;
  // log q(a|S), log q(b|S,i=a), log q(b|S), log q(a|S,j=b)
  std::array<double, 4> log_terms{};
  double value = 0.0;
  // log Q^{i->j}(a,b) - log Q^{j->i}(a,b), evaluated through two pseudo-joints.
  double pseudo_joint_log_ratio = 0.0;
  double normalized_value = 0.0;
};

CurlSample curl_local(const ConditionalOracle& oracle, const Assignment& context, int i, int j, int a, int b);

// |C| / (sum of the four |log q| terms + epsilon).
double curl_normalized(const CurlSample& sample, double epsilon = kDefaultCurlEpsilon);

// Which (i, j, a, b) tuples an aggregate statistic averages over.
struct SamplingPlan {
  enum class Kind { exhaustive, monte_carlo, single };
  Kind kind = Kind::exhaustive;
  std::uint64_t seed = 0;
  std::size_t samples = 0;
  std::array<int, 4> tuple{};  // i, j, a, b for Kind::single

  static SamplingPlan exhaustive() { return {}; }
  static SamplingPlan monte_carlo(std::uint64_t seed, std::size_t samples);
  static SamplingPlan single(int i, int j, int a, int b);
};

// Mean |curl| over unordered block pairs and all token pairs (or a seeded
// uniform sample of them).
Estimate ecirc_abs(const ConditionalOracle& oracle, const PartialContext& context, const SamplingPlan& plan);

// Mean normalized curl under the same plan.
Estimate ecirc_normalized(const ConditionalOracle& oracle, const PartialContext& context,
                          const SamplingPlan& plan, double epsilon = kDefaultCurlEpsilon);

struct KlMode {
  bool exact = true;
  std::uint64_t seed = 0;
  std::size_t samples = 0;

  static KlMode exact_mode() { return {}; }
  static KlMode monte_carlo(std::uint64_t seed, std::size_t samples) { return {false, seed, samples}; }
};

// KL(Q^{i->j} || Q^{j->i}) on the pair (i, j) given the visible context.
Estimate order_swap_kl(const ConditionalOracle& oracle, const Assignment& context, int i, int j,
                       const KlMode& mode);

struct SwapPath {
  Order start;
  Order end;
  // 1-based adjacent positions k_r; step r swaps entries k_r and k_r + 1.
  std::vector<int> steps;

  void validate() const;
};

struct SwapTerm {
  int k = 0;
  CurlSample curl;
  std::vector<int> prefix;  // block positions ahead of the swapped pair
};

struct SwapDecomposition {
  std::vector<SwapTerm> terms;
  double curl_sum = 0.0;
  double log_ratio = 0.0;  // log Q^start - log Q^end
  double residual = 0.0;   // log_ratio - curl_sum
};

SwapDecomposition swap_decomposition(const ConditionalOracle& oracle, const PartialContext& context,
                                     const SwapPath& path, const Assignment& assignment);

struct OrderGapWitness {
  Assignment assignment;
  Order first;
  Order second;
  double gap = 0.0;
};

struct ConsistencyReport {
  bool consistent = false;
  double tolerance = kConsistencyTolerance;
  // max over assignments and order pairs of |log Q^pi - log Q^pi'|
  double max_gap = 0.0;
  // max |curl| over every reachable elementary square
  double max_curl = 0.0;
  bool permutation_verdict = false;
  bool square_verdict = false;
  std::size_t orders_checked = 0;
  std::size_t squares_checked = 0;
  std::optional<OrderGapWitness> gap_witness;
  std::optional<CurlSample> witness;

  bool verdicts_agree() const { return permutation_verdict == square_verdict; }
};

ConsistencyReport order_consistency_check(const ConditionalOracle& oracle, const PartialContext& context,
                                          double tolerance = kConsistencyTolerance);

struct PairKl {
  int i = 0;
  int j = 0;
  Estimate kl;
};

struct CurlScanReport {
  std::string model_id;
  PartialContext context;
  SamplingPlan plan;
  // Set when pairs were sampled rather than enumerated.
  bool sampled_pairs = false;
  Estimate ecirc_abs;
  Estimate ecirc_norm;
  double max_curl = 0.0;
  std::vector<PairKl> order_swap_kl;
  std::vector<CurlSample> witnesses;
  // |curl| histogram over [0, histogram_max] with equal-width bins.
  double histogram_max = 0.0;
  std::vector<std::size_t> histogram;
};

CurlScanReport curl_scan(const ConditionalOracle& oracle, const PartialContext& context,
                         const SamplingPlan& plan, std::size_t witness_count = 5,
                         std::size_t histogram_bins = 20);

// Log-conditionals of every block position under every partial block
// assignment, tabulated once. Keys are (subset mask over block slots, mixed
// radix index of the subset's tokens in slot order).
class BlockConditionals {
 public:
  BlockConditionals(const ConditionalOracle& oracle, const PartialContext& context);

  const std::vector<int>& block() const { return block_; }  // sorted
  int vocab_size() const { return vocab_; }
  const Assignment& base() const { return base_; }

  // log q(x_{block[slot]} = . | S, tokens on `mask` slots) where tokens are
  // read from the full assignment.
  std::span<const double> conditional(unsigned mask, const Assignment& tokens, int slot) const;

 private:
  std::size_t subset_index(unsigned mask, const Assignment& tokens) const;

  std::vector<int> block_;
  int vocab_;
  Assignment base_;
  std::vector<std::vector<double>> table_;
};

}  // namespace curlgauge
