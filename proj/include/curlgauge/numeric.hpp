// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace curlgauge {

double logsumexp(std::span<const double> values);

// In-place log-softmax; the row keeps its length.
void log_softmax(std::span<double> logits);

// KL(p || q) in nats for two log-probability vectors over the same support.
double kl_from_logs(std::span<const double> log_p, std::span<const double> log_q);

// Shannon entropy in nats of a log-probability vector.
double entropy_from_logs(std::span<const double> log_p);

// Jensen-Shannon divergence (nats) between two probability vectors.
double jensen_shannon(std::span<const double> p, std::span<const double> q);

// Mean with standard error. Exhaustive evaluations report std_error = 0.
struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
  bool exact = true;
};

// Welford accumulator.
class RunningStats {
 public:
  void add(double x);
  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const;
  Estimate estimate(bool exact) const;

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

// Engine seeded from a (seed, key...) tuple through seed_seq, so independent
// streams can be addressed by position, run index and so on.
std::mt19937_64 keyed_engine(std::uint64_t seed, std::uint64_t key_a = 0, std::uint64_t key_b = 0);

// One uniform draw in [0, 1) fully determined by (seed, key).
double keyed_uniform(std::uint64_t seed, std::uint64_t key);

// Index drawn by inverse CDF from log-probabilities using a uniform u in [0,1).
int sample_from_logs(std::span<const double> log_p, double u);

// Spearman rank correlation with average ranks for ties. NaN when either
// series is constant or shorter than two.
double spearman(std::span<const double> x, std::span<const double> y);

// Ranks (1-based, averaged over ties).
std::vector<double> average_ranks(std::span<const double> values);

// Pearson chi-square statistic and upper-tail p-value against expected counts.
struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
};
ChiSquareResult chi_square_gof(std::span<const double> observed_counts,
                               std::span<const double> expected_probs);

// 64-bit FNV-1a; stable across platforms, used for config hashes.
std::uint64_t fnv1a64(std::span<const char> bytes);

}  // namespace curlgauge
