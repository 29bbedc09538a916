// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Controlled model zoo: generated joints, coverage-restricted tabular
// training and the squared normalized-curl penalty.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "curlgauge/error.hpp"
#include "curlgauge/model.hpp"
#include "curlgauge/numeric.hpp"
#include "curlgauge/pseudo_joint.hpp"
#include "curlgauge/tabular.hpp"

namespace curlgauge {

struct SyntheticTaskSpec {
  enum class Family { chain, exchangeable, tc_ladder, custom_table };
  Family family = Family::chain;
  int positions = 3;
  int vocab_size = 2;
  std::uint64_t seed = 0;
  double beta = 1.0;     // chain coupling
  int level = 1;         // tc-ladder rung, >= 0
  int components = 3;    // exchangeable mixture size
  std::vector<double> table;  // custom-table log weights
};

std::string to_string(SyntheticTaskSpec::Family f);

// Coupling added per ladder rung.
inline constexpr double kLadderStep = 0.8;

TabularJointModel generate_joint(const SyntheticTaskSpec& spec);

// Every (square context, i, j, a, b) over the whole sequence, addressable by
// a flat index: visible masks ascending, then the visible tokens, then the
// unordered pair (i < j), then a, then b.
class SquareSpace {
 public:
  SquareSpace(int positions, int vocab_size);

  struct Square {
    Assignment context;
    int i = 0;
    int j = 0;
    int a = 0;
    int b = 0;
  };

  std::uint64_t size() const { return total_; }
  Square at(std::uint64_t index) const;

 private:
  int positions_;
  int vocab_;
  std::vector<unsigned> masks_;
  std::vector<std::uint64_t> offsets_;  // cumulative start of each mask
  std::uint64_t total_ = 0;
};

// Mean of the squared normalized curl over SquareSpace (exhaustive, seeded
// uniform sample, or one tuple at the empty context).
Estimate ecirc_penalty(const ConditionalOracle& oracle, const SamplingPlan& plan,
                       double epsilon = kDefaultCurlEpsilon);

enum class SquareFilter { all, prefix, random_mask };

// Mean |curl| over every square whose visible set passes the filter.
// Prefix squares have visible set {0, ..., k-1} for some k.
Estimate mean_ecirc_abs(const ConditionalOracle& oracle, SquareFilter filter = SquareFilter::all);

struct TrainConfig {
  enum class Coverage { prefix_only, all_masks, fraction };
  Coverage coverage = Coverage::all_masks;
  double fraction = 1.0;
  std::size_t steps = 2000;
  double learning_rate = 20.0;
  double ecirc_weight = 0.0;
  std::size_t ecirc_samples = 256;  // 0 means every square each step
  std::uint64_t seed = 0;
  double grad_tolerance = 1e-8;
};

std::string to_string(TrainConfig::Coverage c);

struct TrainingHistory {
  std::vector<double> loss;       // mean expected cross-entropy over covered patterns
  std::vector<double> ecirc;      // penalty estimate used at each step
  std::vector<double> grad_norm;
  bool converged = false;
  std::size_t patterns = 0;
  double learning_rate = 0.0;  // effective step after the stability cap
};

class TrainingFailure : public Error {
 public:
  TrainingFailure(const std::string& what, TrainingHistory history)
      : Error(what), history_(std::move(history)) {}
  const TrainingHistory& history() const { return history_; }

 private:
  TrainingHistory history_;
};

class TrainedTabularOracle final : public LogitTableOracle {
 public:
  TrainedTabularOracle(LogitTable table, TrainingHistory history, std::string id)
      : LogitTableOracle(std::move(table), std::move(id)), history_(std::move(history)) {}
  const TrainingHistory& history() const { return history_; }

 private:
  TrainingHistory history_;
};

// Mask patterns (i, visible set) covered by the config, in a fixed order.
std::vector<std::pair<int, unsigned>> covered_patterns(int positions, const TrainConfig& config);

// Full-batch gradient descent on a zero-initialized logit table.
TrainedTabularOracle train_tabular(const TabularJointModel& joint, const TrainConfig& config);

}  // namespace curlgauge
