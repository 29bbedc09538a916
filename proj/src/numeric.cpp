// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0

#include "curlgauge/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>

#include "curlgauge/error.hpp"

namespace curlgauge {

double logsumexp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double hi = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

void log_softmax(std::span<double> logits) {
  const double lse = logsumexp(logits);
  for (double& v : logits) v -= lse;
}

double kl_from_logs(std::span<const double> log_p, std::span<const double> log_q) {
  if (log_p.size() != log_q.size()) throw DimensionError("kl: support size mismatch");
  double kl = 0.0;
  for (std::size_t k = 0; k < log_p.size(); ++k) {
    const double p = std::exp(log_p[k]);
    if (p == 0.0) continue;
    kl += p * (log_p[k] - log_q[k]);
  }
  return kl;
}

double entropy_from_logs(std::span<const double> log_p) {
  double h = 0.0;
  for (double lp : log_p) {
    const double p = std::exp(lp);
    if (p > 0.0) h -= p * lp;
  }
  return h;
}

double jensen_shannon(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DimensionError("jensen_shannon: support size mismatch");
  // Each term is p log(2p/s) + q log(2q/s) with s = p + q, written through
  // log1p of d/s so that nearly equal inputs cancel without rounding noise.
  double js = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double s = p[k] + q[k];
    if (s <= 0.0) continue;
    const double r = (p[k] - q[k]) / s;
    double term = 0.0;
    if (p[k] > 0.0) term += p[k] * std::log1p(r);
    if (q[k] > 0.0) term += q[k] * std::log1p(-r);
    js += 0.5 * std::max(term, 0.0);
  }
  return std::clamp(js, 0.0, std::log(2.0));
}

void RunningStats::add(double x) {
  ++n_;
  const double delta = x - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_ += delta * (x - mean_);
}

double RunningStats::variance() const {
  return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0;
}

Estimate RunningStats::estimate(bool exact) const {
  Estimate e;
  e.mean = mean_;
  e.n = n_;
  e.exact = exact;
  e.std_error = (exact || n_ < 2) ? 0.0 : std::sqrt(variance() / static_cast<double>(n_));
  return e;
}

std::mt19937_64 keyed_engine(std::uint64_t seed, std::uint64_t key_a, std::uint64_t key_b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(key_a), static_cast<std::uint32_t>(key_a >> 32),
                    static_cast<std::uint32_t>(key_b), static_cast<std::uint32_t>(key_b >> 32)};
  return std::mt19937_64(seq);
}

double keyed_uniform(std::uint64_t seed, std::uint64_t key) {
  auto engine = keyed_engine(seed, key, 0x9e3779b97f4a7c15ULL);
  return std::generate_canonical<double, 53>(engine);
}

int sample_from_logs(std::span<const double> log_p, double u) {
  double cumulative = 0.0;
  int last_positive = 0;
  for (std::size_t k = 0; k < log_p.size(); ++k) {
    const double p = std::exp(log_p[k]);
    if (p > 0.0) last_positive = static_cast<int>(k);
    cumulative += p;
    if (u < cumulative) return static_cast<int>(k);
  }
  // u landed in the rounding slack above the cumulative sum.
  return last_positive;
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t start = 0;
  while (start < n) {
    std::size_t end = start + 1;
    while (end < n && values[idx[end]] == values[idx[start]]) ++end;
    const double r = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t k = start; k < end; ++k) ranks[idx[k]] = r;
    start = end;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("spearman: series length mismatch");
  const std::size_t n = x.size();
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    sxy += (rx[k] - mx) * (ry[k] - my);
    sxx += (rx[k] - mx) * (rx[k] - mx);
    syy += (ry[k] - my) * (ry[k] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

ChiSquareResult chi_square_gof(std::span<const double> observed_counts,
                               std::span<const double> expected_probs) {
  if (observed_counts.size() != expected_probs.size() || observed_counts.size() < 2) {
    throw DimensionError("chi_square_gof: need matching supports of size >= 2");
  }
  const double total = std::accumulate(observed_counts.begin(), observed_counts.end(), 0.0);
  if (!(total > 0.0)) throw ContractViolation("chi_square_gof: no observations");
  for (double p : expected_probs) {
    if (!(p > 0.0)) throw ContractViolation("chi_square_gof: expected probabilities must be positive");
  }
  ChiSquareResult out;
  for (std::size_t k = 0; k < observed_counts.size(); ++k) {
    const double expected = total * expected_probs[k];
    const double diff = observed_counts[k] - expected;
    out.statistic += diff * diff / expected;
  }
  out.dof = static_cast<int>(observed_counts.size()) - 1;
  boost::math::chi_squared_distribution<double> dist(out.dof);
  out.p_value = boost::math::cdf(boost::math::complement(dist, out.statistic));
  return out;
}

std::uint64_t fnv1a64(std::span<const char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace curlgauge
