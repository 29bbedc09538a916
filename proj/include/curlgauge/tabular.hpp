// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Tabular model families: an exact joint over at most six positions, the
// Bayes-optimal oracle it induces, a seeded logit perturbation of that
// oracle, and free-standing logit tables.

#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "curlgauge/model.hpp"

namespace curlgauge {

inline constexpr double kLogMassFloor = -50.0;

// Exact joint p(x_1..x_m) stored as a dense row-major log table (last
// position varies fastest). Marginals over every subset of positions are
// precomputed, so conditional queries are O(m).
class TabularJointModel {
 public:
  // Strict constructor: the table must already be normalized (logsumexp = 0
  // within 1e-9) and finite everywhere.
  TabularJointModel(int vocab_size, int positions, std::vector<double> log_mass,
                    std::string model_id = "tabular");

  // Normalizes arbitrary finite log-weights, floors every state at
  // kLogMassFloor and renormalizes.
  static TabularJointModel from_log_weights(int vocab_size, int positions,
                                            std::vector<double> log_weights,
                                            std::string model_id = "tabular");

  const Vocabulary& vocabulary() const { return vocab_; }
  int positions() const { return positions_; }
  const std::string& id() const { return id_; }
  std::span<const double> log_mass() const { return log_mass_; }
  std::size_t state_count() const { return log_mass_.size(); }

  // Row-major index of a fully set assignment and its inverse.
  std::size_t state_index(const Assignment& full) const;
  Assignment state(std::size_t index) const;

  double log_prob(const Assignment& full) const;
  // log p(x_visible) with the unset positions summed out.
  double log_marginal(const Assignment& visible) const;

 private:
  std::size_t marginal_index(unsigned mask, const Assignment& visible) const;
  void build_marginals();

  Vocabulary vocab_;
  int positions_;
  std::vector<double> log_mass_;
  std::string id_;
  // log_marginals_[mask] is indexed row-major over the positions in mask.
  std::vector<std::vector<double>> log_marginals_;
};

// log p(x_i = a | visible) by exact marginalization of the joint.
double bayes_conditional(const TabularJointModel& joint, int i, int a, const Assignment& visible);

class BayesOracle final : public ConditionalOracle {
 public:
  explicit BayesOracle(std::shared_ptr<const TabularJointModel> joint);

  int positions() const override { return joint_->positions(); }
  Vocabulary vocabulary() const override { return joint_->vocabulary(); }
  std::string id() const override { return "bayes:" + joint_->id(); }
  const TabularJointModel& joint() const { return *joint_; }

 protected:
  void do_log_conditional(int i, const Assignment& visible, std::span<double> out) const override;

 private:
  std::shared_ptr<const TabularJointModel> joint_;
};

// Bayes conditionals with i.i.d. N(0,1) logit offsets per (position, full
// visible context), scaled by delta and drawn once from the seed.
class PerturbedConditionalModel final : public ConditionalOracle {
 public:
  PerturbedConditionalModel(std::shared_ptr<const TabularJointModel> base, double delta,
                            std::uint64_t seed);

  int positions() const override { return base_.positions(); }
  Vocabulary vocabulary() const override { return base_.vocabulary(); }
  std::string id() const override;
  double delta() const { return delta_; }
  std::uint64_t seed() const { return seed_; }
  const TabularJointModel& base() const { return base_.joint(); }

 protected:
  void do_log_conditional(int i, const Assignment& visible, std::span<double> out) const override;

 private:
  BayesOracle base_;
  double delta_;
  std::uint64_t seed_;
  ContextIndex index_;
  std::vector<double> offsets_;
};

double perturbed_conditional(const PerturbedConditionalModel& model, int i, int a,
                             const Assignment& visible);

// Raw logits per (position, visible context) row; see ContextIndex for the
// row layout.
class LogitTable {
 public:
  LogitTable(int positions, int vocab_size);
  LogitTable(int positions, int vocab_size, std::vector<double> logits);

  // Tabulates an oracle's log-conditionals (valid logits) for every row.
  static LogitTable from_oracle(const ConditionalOracle& oracle);

  const ContextIndex& index() const { return index_; }
  int positions() const { return index_.positions(); }
  int vocab_size() const { return index_.vocab_size(); }
  std::size_t row_count() const { return index_.row_count(); }

  std::span<const double> row(std::size_t r) const;
  std::span<double> row(std::size_t r);
  std::span<const double> row(int position, const Assignment& visible) const {
    return row(index_.row(position, visible));
  }
  std::span<const double> data() const { return logits_; }
  std::span<double> data() { return logits_; }

 private:
  ContextIndex index_;
  std::vector<double> logits_;
};

// Adds shifts[r] to every logit of row r. Softmax of each row is unchanged.
LogitTable apply_logit_shift(const LogitTable& table, std::span<const double> shifts);

class LogitTableOracle : public ConditionalOracle {
 public:
  explicit LogitTableOracle(LogitTable table, std::string id = "logit-table");

  int positions() const override { return table_.positions(); }
  Vocabulary vocabulary() const override { return Vocabulary(table_.vocab_size()); }
  std::string id() const override { return id_; }
  const LogitTable& table() const { return table_; }

 protected:
  void do_log_conditional(int i, const Assignment& visible, std::span<double> out) const override;

 private:
  LogitTable table_;
  std::string id_;
};

}  // namespace curlgauge
