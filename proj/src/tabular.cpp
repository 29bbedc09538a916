// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0

#include "curlgauge/tabular.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <random>

#include <fmt/format.h>

#include "curlgauge/error.hpp"
#include "curlgauge/numeric.hpp"

namespace curlgauge {

namespace {

std::size_t ipow(std::size_t base, int exp) {
  std::size_t r = 1;
  for (int k = 0; k < exp; ++k) r *= base;
  return r;
}

}  // namespace

TabularJointModel::TabularJointModel(int vocab_size, int positions, std::vector<double> log_mass,
                                     std::string model_id)
    : vocab_(vocab_size), positions_(positions), log_mass_(std::move(log_mass)), id_(std::move(model_id)) {
  if (positions < 1 || positions > kMaxPositions) {
    throw CapExceeded(fmt::format("position count {} outside [1, {}]", positions, kMaxPositions));
  }
  const std::size_t states = ipow(static_cast<std::size_t>(vocab_size), positions);
  if (log_mass_.size() != states) {
    throw DimensionError(fmt::format("log_mass has {} entries, expected {}^{} = {}", log_mass_.size(),
                                     vocab_size, positions, states));
  }
  for (double v : log_mass_) {
    if (!std::isfinite(v)) throw ContractViolation("joint log-mass must be finite (strictly positive joint)");
  }
  const double total = logsumexp(log_mass_);
  if (std::abs(total) > 1e-9) {
    throw ContractViolation(fmt::format("joint is not normalized: logsumexp = {}", total));
  }
  build_marginals();
}

TabularJointModel TabularJointModel::from_log_weights(int vocab_size, int positions,
                                                      std::vector<double> log_weights,
                                                      std::string model_id) {
  for (double w : log_weights) {
    if (std::isnan(w) || w == std::numeric_limits<double>::infinity()) {
      throw ContractViolation("log-weights must be finite or -inf");
    }
  }
  double lse = logsumexp(log_weights);
  if (!std::isfinite(lse)) throw ContractViolation("log-weights carry no mass");
  for (double& w : log_weights) w = std::max(w - lse, kLogMassFloor);
  lse = logsumexp(log_weights);
  for (double& w : log_weights) w -= lse;
  return TabularJointModel(vocab_size, positions, std::move(log_weights), std::move(model_id));
}

std::size_t TabularJointModel::state_index(const Assignment& full) const {
  if (full.size() != positions_) throw DimensionError("assignment size does not match joint");
  std::size_t idx = 0;
  for (int k = 0; k < positions_; ++k) {
    if (!full.is_set(k)) throw ContractViolation(fmt::format("position {} unset in full assignment", k));
    if (!vocab_.contains(full[k])) throw DimensionError(fmt::format("token {} outside vocabulary", full[k]));
    idx = idx * static_cast<std::size_t>(vocab_.size()) + static_cast<std::size_t>(full[k]);
  }
  return idx;
}

Assignment TabularJointModel::state(std::size_t index) const {
  if (index >= log_mass_.size()) throw DimensionError("state index out of range");
  Assignment a(positions_);
  const auto v = static_cast<std::size_t>(vocab_.size());
  for (int k = positions_ - 1; k >= 0; --k) {
    a.set(k, static_cast<int>(index % v));
    index /= v;
  }
  return a;
}

double TabularJointModel::log_prob(const Assignment& full) const { return log_mass_[state_index(full)]; }

std::size_t TabularJointModel::marginal_index(unsigned mask, const Assignment& visible) const {
  std::size_t idx = 0;
  for (int k = 0; k < positions_; ++k) {
    if (!(mask & (1u << k))) continue;
    if (!vocab_.contains(visible[k])) throw DimensionError(fmt::format("token {} outside vocabulary", visible[k]));
    idx = idx * static_cast<std::size_t>(vocab_.size()) + static_cast<std::size_t>(visible[k]);
  }
  return idx;
}

double TabularJointModel::log_marginal(const Assignment& visible) const {
  if (visible.size() != positions_) throw DimensionError("assignment size does not match joint");
  const unsigned mask = visible.mask();
  return log_marginals_[mask][marginal_index(mask, visible)];
}

void TabularJointModel::build_marginals() {
  const unsigned full = (1u << positions_) - 1u;
  const auto v = static_cast<std::size_t>(vocab_.size());
  std::vector<std::vector<double>> linear(full + 1);
  linear[full].resize(log_mass_.size());
  for (std::size_t s = 0; s < log_mass_.size(); ++s) linear[full][s] = std::exp(log_mass_[s]);

  // Every proper mask sums one position out of a numerically larger parent.
  for (unsigned mask = full; mask-- > 0;) {
    const int k = std::countr_one(mask);
    const unsigned parent = mask | (1u << k);
    const int above = std::popcount(parent >> (k + 1));
    const std::size_t stride = ipow(v, above);
    const auto& src = linear[parent];
    auto& dst = linear[mask];
    dst.assign(src.size() / v, 0.0);
    const std::size_t blocks = src.size() / (v * stride);
    for (std::size_t high = 0; high < blocks; ++high) {
      for (std::size_t digit = 0; digit < v; ++digit) {
        const std::size_t base = (high * v + digit) * stride;
        for (std::size_t low = 0; low < stride; ++low) dst[high * stride + low] += src[base + low];
      }
    }
  }

  log_marginals_.resize(full + 1);
  log_marginals_[full] = log_mass_;
  for (unsigned mask = 0; mask < full; ++mask) {
    auto& out = log_marginals_[mask];
    out.resize(linear[mask].size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::log(linear[mask][k]);
  }
}

double bayes_conditional(const TabularJointModel& joint, int i, int a, const Assignment& visible) {
  if (visible.size() != joint.positions()) throw DimensionError("context does not match joint dimensions");
  if (i < 0 || i >= joint.positions()) throw DimensionError(fmt::format("position {} out of range", i));
  if (visible.is_set(i)) throw ContractViolation(fmt::format("position {} is already observed", i));
  Assignment with = visible;
  with.set(i, a);
  return joint.log_marginal(with) - joint.log_marginal(visible);
}

BayesOracle::BayesOracle(std::shared_ptr<const TabularJointModel> joint) : joint_(std::move(joint)) {
  if (!joint_) throw ContractViolation("BayesOracle needs a joint");
}

void BayesOracle::do_log_conditional(int i, const Assignment& visible, std::span<double> out) const {
  const double denom = joint_->log_marginal(visible);
  Assignment with = visible;
  for (int a = 0; a < static_cast<int>(out.size()); ++a) {
    with.set(i, a);
    out[static_cast<std::size_t>(a)] = joint_->log_marginal(with) - denom;
  }
}

PerturbedConditionalModel::PerturbedConditionalModel(std::shared_ptr<const TabularJointModel> base,
                                                     double delta, std::uint64_t seed)
    : base_(std::move(base)), delta_(delta), seed_(seed),
      index_(base_.positions(), base_.vocabulary().size()) {
  if (!std::isfinite(delta) || delta < 0.0) {
    throw ContractViolation(fmt::format("perturbation delta must be finite and >= 0, got {}", delta));
  }
  if (delta_ > 0.0) {
    std::mt19937_64 engine(seed_);
    std::normal_distribution<double> normal(0.0, 1.0);
    offsets_.resize(index_.row_count() * static_cast<std::size_t>(base_.vocabulary().size()));
    for (double& z : offsets_) z = normal(engine);
  }
}

std::string PerturbedConditionalModel::id() const {
  return fmt::format("perturbed(delta={},seed={}):{}", delta_, seed_, base_.joint().id());
}

void PerturbedConditionalModel::do_log_conditional(int i, const Assignment& visible,
                                                   std::span<double> out) const {
  base_.log_conditional(i, visible, out);
  if (delta_ == 0.0) return;
  const std::size_t v = out.size();
  const std::size_t offset = index_.row(i, visible) * v;
  for (std::size_t a = 0; a < v; ++a) out[a] += delta_ * offsets_[offset + a];
  log_softmax(out);
}

double perturbed_conditional(const PerturbedConditionalModel& model, int i, int a, const Assignment& visible) {
  return model.log_conditional(i, a, visible);
}

LogitTable::LogitTable(int positions, int vocab_size)
    : index_(positions, vocab_size),
      logits_(index_.row_count() * static_cast<std::size_t>(Vocabulary(vocab_size).size()), 0.0) {}

LogitTable::LogitTable(int positions, int vocab_size, std::vector<double> logits)
    : index_(positions, vocab_size), logits_(std::move(logits)) {
  Vocabulary vocab(vocab_size);
  if (logits_.size() != index_.row_count() * static_cast<std::size_t>(vocab.size())) {
    throw DimensionError(fmt::format("logit table has {} entries, expected {}", logits_.size(),
                                     index_.row_count() * static_cast<std::size_t>(vocab.size())));
  }
  for (double l : logits_) {
    if (!std::isfinite(l)) throw ContractViolation("logits must be finite");
  }
}

LogitTable LogitTable::from_oracle(const ConditionalOracle& oracle) {
  LogitTable table(oracle.positions(), oracle.vocabulary().size());
  for (std::size_t r = 0; r < table.row_count(); ++r) {
    const auto [position, visible] = table.index_.decode(r);
    oracle.log_conditional(position, visible, table.row(r));
  }
  return table;
}

std::span<const double> LogitTable::row(std::size_t r) const {
  const auto v = static_cast<std::size_t>(vocab_size());
  return std::span<const double>(logits_).subspan(r * v, v);
}

std::span<double> LogitTable::row(std::size_t r) {
  const auto v = static_cast<std::size_t>(vocab_size());
  return std::span<double>(logits_).subspan(r * v, v);
}

LogitTable apply_logit_shift(const LogitTable& table, std::span<const double> shifts) {
  if (shifts.size() != table.row_count()) {
    throw DimensionError(fmt::format("expected {} shifts (one per row), got {}", table.row_count(), shifts.size()));
  }
  LogitTable out = table;
  for (std::size_t r = 0; r < shifts.size(); ++r) {
    if (!std::isfinite(shifts[r])) throw ContractViolation(fmt::format("shift for row {} is not finite", r));
    for (double& l : out.row(r)) l += shifts[r];
  }
  return out;
}

LogitTableOracle::LogitTableOracle(LogitTable table, std::string id)
    : table_(std::move(table)), id_(std::move(id)) {}

void LogitTableOracle::do_log_conditional(int i, const Assignment& visible, std::span<double> out) const {
  const auto row = table_.row(i, visible);
  std::copy(row.begin(), row.end(), out.begin());
  log_softmax(out);
}

}  // namespace curlgauge
