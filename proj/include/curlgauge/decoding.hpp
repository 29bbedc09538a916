// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Commit-style decoding: update operators, pairwise commutators, schedulers
// and the parallel-width stress harness.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "curlgauge/model.hpp"
#include "curlgauge/tabular.hpp"

namespace curlgauge {

struct UpdateOperator {
  enum class Kind { argmax, sample, threshold };
  Kind kind = Kind::argmax;
  double tau = 1.0;  // threshold only

  static UpdateOperator argmax() { return {Kind::argmax, 1.0}; }
  static UpdateOperator sample() { return {Kind::sample, 1.0}; }
  static UpdateOperator threshold(double tau);

  std::string name() const;
};

struct Commit {
  std::size_t round = 0;
  int position = 0;
  int token = 0;
  std::string op;
};

// The block shrinks and the observed map grows as positions commit.
struct DecodeState {
  PartialContext context;
  int positions = 0;
  std::uint64_t rng_seed = 0;
  std::vector<Commit> trajectory;

  static DecodeState start(PartialContext context, int positions, std::uint64_t rng_seed);

  Assignment visible() const { return context.visible(positions); }
  std::vector<int> unresolved() const;  // sorted
  bool done() const { return context.block.empty(); }
};

// Token chosen by `op` from a log-conditional, or -1 for a threshold no-op.
// Sample draws use keyed_uniform(rng_seed, position).
int choose_token(const UpdateOperator& op, std::span<const double> log_q, std::uint64_t rng_seed, int position);

// Moves `position` from the block to the observed set. Throws
// ContractViolation if it is already committed or not in the block.
void commit(DecodeState& state, int position, int token, const std::string& op, std::size_t round);

// Applies `op` at `position` using the oracle's current conditional.
// Threshold updates below tau leave the state unchanged.
DecodeState apply_update(const ConditionalOracle& oracle, const DecodeState& state, const UpdateOperator& op,
                         int position);

struct CommutatorReport {
  int i = 0;
  int j = 0;
  std::string divergence_kind = "sqrt-js";
  double value = 0.0;
  std::vector<int> remaining;             // coordinates of the predictive object
  std::vector<double> predictive_ij;      // probabilities, last coordinate fastest
  std::vector<double> predictive_ji;
  Assignment visible_ij;
  Assignment visible_ji;
};

// sqrt JS between the product-of-conditionals predictive objects over the
// unresolved block minus {i, j}, after committing i then j and j then i.
// Throws DegenerateComparison if nothing would remain.
CommutatorReport commutator(const ConditionalOracle& oracle, const DecodeState& state, const UpdateOperator& op,
                            int i, int j);

struct ConflictReport {
  double value = 0.0;
  std::vector<std::pair<std::pair<int, int>, double>> pairs;
  std::size_t excluded_pairs = 0;
  bool degenerate = false;
};

// Sum of commutators over unordered pairs of `block` (a subset of the
// unresolved positions). Pairs leaving nothing to compare are excluded.
ConflictReport conflict_score(const ConditionalOracle& oracle, const DecodeState& state, const UpdateOperator& op,
                              const std::vector<int>& block);

// Sum over pairs in `block` of the mutual information of the oracle's
// two-step pseudo-joint q(a|z) q(b|z, i=a).
double oracle_pair_dependence(const ConditionalOracle& oracle, const DecodeState& state,
                              const std::vector<int>& block);

struct SchedulerSpec {
  enum class Kind { left_to_right, random, confidence, conflict_aware };
  enum class Search { contiguous, subsets };
  Kind kind = Kind::left_to_right;
  std::uint64_t seed = 0;
  double lambda_confidence = 1.0;
  double lambda_conflict = 1.0;
  double lambda_dependence = 1.0;
  Search search = Search::contiguous;

  static SchedulerSpec left_to_right() { return {}; }
  static SchedulerSpec random(std::uint64_t seed);
  static SchedulerSpec confidence();
  static SchedulerSpec conflict_aware(double l1 = 1.0, double l2 = 1.0, double l3 = 1.0,
                                      Search search = Search::contiguous);

  std::string name() const;
};

// Commits up to `width` positions per round, all drawn from the pre-round
// conditionals. If a threshold round would commit nothing, the most
// confident selected position is committed by argmax so decoding ends.
DecodeState run_scheduler(const ConditionalOracle& oracle, DecodeState state, const SchedulerSpec& scheduler,
                          const UpdateOperator& op, std::size_t width);

struct StressConfig {
  std::vector<std::size_t> widths;
  std::vector<SchedulerSpec> schedulers;
  UpdateOperator op = UpdateOperator::sample();
  std::size_t runs = 200;
  std::uint64_t seed = 0;
};

struct StressRow {
  std::size_t context = 0;
  std::string scheduler;
  std::size_t width = 0;
  double nll = 0.0;
  double degradation = 0.0;
  double ecirc_abs = 0.0;
  double tc = 0.0;
  double mean_eps = 0.0;
  double conflict = 0.0;
};

struct StressReport {
  std::vector<StressRow> rows;
  // Spearman rank correlation of degradation against each predictor, over
  // rows with width > 1. NaN when undefined.
  std::map<std::string, double> spearman;
};

StressReport stress_test(const ConditionalOracle& oracle, const TabularJointModel& joint,
                         const std::vector<PartialContext>& contexts, const StressConfig& config);

}  // namespace curlgauge
