// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include <doctest.h>

#include "curlgauge/decoding.hpp"
#include "curlgauge/error.hpp"
#include "curlgauge/numeric.hpp"
#include "curlgauge/parallel.hpp"
#include "support/fixtures.hpp"

using namespace curlgauge;
using namespace curlgauge::testing;

namespace {

std::shared_ptr<const TabularJointModel> product_joint(std::mt19937_64& rng, int m, int v) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> field(static_cast<std::size_t>(m), std::vector<double>(static_cast<std::size_t>(v)));
  for (auto& row : field) {
    for (double& x : row) x = normal(rng);
  }
  std::size_t n = 1;
  for (int k = 0; k < m; ++k) n *= static_cast<std::size_t>(v);
  std::vector<double> w(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    const auto x = decode_state(s, m, v);
    for (int k = 0; k < m; ++k) w[s] += field[static_cast<std::size_t>(k)][static_cast<std::size_t>(x[static_cast<std::size_t>(k)])];
  }
  return std::make_shared<const TabularJointModel>(TabularJointModel::from_log_weights(v, m, w));
}

PartialContext block_of(std::vector<int> block) {
  PartialContext ctx;
  ctx.block = std::move(block);
  return ctx;
}

// Commits i then j with the operator, then enumerates the product of the
// remaining conditionals with the last coordinate fastest.
std::vector<double> brute_predictive(const ConditionalOracle& q, const DecodeState& s, const UpdateOperator& op,
                                     int first, int second, const std::vector<int>& rest) {
  Assignment visible = s.visible();
  for (int p : {first, second}) {
    const int token = choose_token(op, q.log_conditional(p, visible), s.rng_seed, p);
    if (token >= 0) visible.set(p, token);
  }
  const int v = q.vocabulary().size();
  std::vector<std::vector<double>> cond;
  for (int r : rest) cond.push_back(q.log_conditional(r, visible));
  std::vector<double> out;
  std::vector<int> digits(rest.size(), 0);
  while (true) {
    double lp = 0.0;
    for (std::size_t k = 0; k < rest.size(); ++k) lp += cond[k][static_cast<std::size_t>(digits[k])];
    out.push_back(std::exp(lp));
    std::size_t k = rest.size();
    while (k > 0 && ++digits[k - 1] == v) digits[--k] = 0;
    if (k == 0) break;
  }
  return out;
}

double brute_sqrt_js(const std::vector<double>& p, const std::vector<double>& q) {
  double js = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double mid = 0.5 * (p[k] + q[k]);
    if (p[k] > 0) js += 0.5 * p[k] * std::log(p[k] / mid);
    if (q[k] > 0) js += 0.5 * q[k] * std::log(q[k] / mid);
  }
  return std::sqrt(std::max(js, 0.0));
}

}  // namespace

TEST_CASE("commit operators on (0.7, 0.3)") {
  const std::vector<double> lq = {std::log(0.7), std::log(0.3)};
  CHECK(choose_token(UpdateOperator::argmax(), lq, 0, 0) == 0);
  CHECK(choose_token(UpdateOperator::threshold(0.9), lq, 0, 0) == -1);
  CHECK(choose_token(UpdateOperator::threshold(0.6), lq, 0, 0) == 0);
  const int first = choose_token(UpdateOperator::sample(), lq, 42, 3);
  CHECK(choose_token(UpdateOperator::sample(), lq, 42, 3) == first);
  const std::vector<double> tie = {std::log(0.25), std::log(0.375), std::log(0.375)};
  CHECK(choose_token(UpdateOperator::argmax(), tie, 0, 0) == 1);
  CHECK_THROWS_AS(UpdateOperator::threshold(0.0), ConfigError);
  CHECK_THROWS_AS(UpdateOperator::threshold(1.5), ConfigError);
  CHECK(UpdateOperator::threshold(0.9).name() == "threshold(0.9)");
}

TEST_CASE("sample commits follow the conditional") {
  const std::vector<double> lq = {std::log(0.2), std::log(0.5), std::log(0.3)};
  std::vector<double> counts(3, 0.0);
  for (std::uint64_t s = 0; s < 20000; ++s) counts[static_cast<std::size_t>(choose_token(UpdateOperator::sample(), lq, s, 1))] += 1;
  CHECK(chi_square_gof(counts, std::vector<double>{0.2, 0.5, 0.3}).p_value > 0.001);
}

TEST_CASE("commit bookkeeping") {
  DecodeState s = DecodeState::start(block_of({2, 0, 1}), 3, 5);
  CHECK(s.context.block == std::vector<int>{0, 1, 2});
  commit(s, 1, 0, "argmax", 0);
  CHECK(s.unresolved() == std::vector<int>{0, 2});
  CHECK(s.context.observed.at(1) == 0);
  CHECK_THROWS_AS(commit(s, 1, 0, "argmax", 1), ContractViolation);
  CHECK_THROWS_AS(commit(s, 5, 0, "argmax", 1), ContractViolation);
}

TEST_CASE("threshold updates never commit below tau") {
  std::mt19937_64 rng(41);
  for (int n = 0; n < 200; ++n) {
    const auto joint = random_joint(rng, 3, 3, 2.0);
    const PerturbedConditionalModel q(joint, 0.5, rng());
    const DecodeState s = DecodeState::start(block_of({0, 1, 2}), 3, rng());
    const double tau = uniform_real(rng, 0.2, 1.0);
    const int pos = uniform_int(rng, 0, 2);
    const DecodeState after = apply_update(q, s, UpdateOperator::threshold(tau), pos);
    const auto lq = q.log_conditional(pos, s.visible());
    if (after.trajectory.empty()) {
      CHECK(*std::max_element(lq.begin(), lq.end()) < std::log(tau));
    } else {
      CHECK(std::exp(lq[static_cast<std::size_t>(after.trajectory.back().token)]) >= tau);
    }
  }
}

TEST_CASE("commutator vanishes on an independent joint") {
  std::mt19937_64 rng(42);
  const auto joint = product_joint(rng, 4, 3);
  const BayesOracle q(joint);
  const DecodeState s = DecodeState::start(block_of({0, 1, 2, 3}), 4, 7);
  for (const auto& op : {UpdateOperator::argmax(), UpdateOperator::sample()}) {
    CHECK(commutator(q, s, op, 0, 2).value < 1e-12);
  }
  CHECK(conflict_score(q, s, UpdateOperator::argmax(), {0, 1, 2, 3}).value < 1e-10);
}

TEST_CASE("commutator matches brute-force enumeration") {
  std::mt19937_64 rng(43);
  int nonzero = 0;
  for (int n = 0; n < 30; ++n) {
    const auto joint = random_joint(rng, 4, 3, 2.0);
    const auto q = n % 2 ? std::shared_ptr<const ConditionalOracle>(std::make_shared<BayesOracle>(joint))
                         : std::make_shared<PerturbedConditionalModel>(joint, 0.7, rng());
    PartialContext ctx = block_of({0, 1, 2, 3});
    if (n % 3 == 0) {
      ctx.block = {0, 2, 3};
      ctx.observed[1] = uniform_int(rng, 0, 2);
    }
    const DecodeState s = DecodeState::start(ctx, 4, rng());
    const int i = ctx.block[0];
    const int j = ctx.block[1];
    const std::vector<int> rest(ctx.block.begin() + 2, ctx.block.end());
    for (const auto& op : {UpdateOperator::argmax(), UpdateOperator::sample(), UpdateOperator::threshold(0.4)}) {
      const auto r = commutator(*q, s, op, i, j);
      const double expected =
          brute_sqrt_js(brute_predictive(*q, s, op, i, j, rest), brute_predictive(*q, s, op, j, i, rest));
      CHECK(std::abs(r.value - expected) < 1e-12);
      CHECK(r.value >= 0.0);
      CHECK(r.value <= std::sqrt(std::log(2.0)) + 1e-15);
      CHECK(std::abs(r.value - commutator(*q, s, op, j, i).value) < 1e-12);
      CHECK(r.remaining == rest);
      nonzero += r.value > 1e-6;
    }
  }
  CHECK(nonzero > 0);
}

TEST_CASE("commutator with nothing left to compare") {
  std::mt19937_64 rng(44);
  const BayesOracle q(random_joint(rng, 3, 2));
  const DecodeState s = DecodeState::start(block_of({0, 1}), 3, 1);
  CHECK_THROWS_AS(commutator(q, s, UpdateOperator::argmax(), 0, 1), DegenerateComparison);
  const auto c = conflict_score(q, s, UpdateOperator::argmax(), {0, 1});
  CHECK(c.degenerate);
  CHECK(c.excluded_pairs == 1);
}

TEST_CASE("conflict score is a sum over pairs") {
  std::mt19937_64 rng(45);
  const auto joint = random_joint(rng, 4, 3, 2.0);
  const PerturbedConditionalModel q(joint, 0.5, 9);
  const DecodeState s = DecodeState::start(block_of({0, 1, 2, 3}), 4, 3);
  const auto pair = conflict_score(q, s, UpdateOperator::argmax(), {1, 3});
  CHECK(pair.value == commutator(q, s, UpdateOperator::argmax(), 1, 3).value);
  const auto forward = conflict_score(q, s, UpdateOperator::argmax(), {0, 1, 2});
  const auto backward = conflict_score(q, s, UpdateOperator::argmax(), {2, 1, 0});
  CHECK(std::abs(forward.value - backward.value) < 1e-12);
  double sum = 0.0;
  for (const auto& [ij, v] : forward.pairs) sum += v;
  CHECK(std::abs(sum - forward.value) < 1e-12);
  CHECK(forward.pairs.size() == 3);
  CHECK(oracle_pair_dependence(q, s, {0, 1, 2}) >= 0.0);
  CHECK(oracle_pair_dependence(BayesOracle(product_joint(rng, 4, 3)), s, {0, 1, 2}) < 1e-12);
}

TEST_CASE("left-to-right commits in increasing index order") {
  std::mt19937_64 rng(46);
  const BayesOracle q(random_joint(rng, 5, 2));
  PartialContext ctx = block_of({4, 0, 2, 3});
  ctx.observed[1] = 1;
  const auto done = run_scheduler(q, DecodeState::start(ctx, 5, 2), SchedulerSpec::left_to_right(),
                                  UpdateOperator::sample(), 1);
  REQUIRE(done.trajectory.size() == 4);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(done.trajectory[k].round == k);
    if (k) CHECK(done.trajectory[k].position > done.trajectory[k - 1].position);
  }
  CHECK(done.done());
  CHECK_THROWS(run_scheduler(q, DecodeState::start(ctx, 5, 2), SchedulerSpec::left_to_right(),
                             UpdateOperator::sample(), 0));
}

TEST_CASE("schedulers finish and respect width") {
  std::mt19937_64 rng(47);
  const PerturbedConditionalModel q(random_joint(rng, 5, 3, 1.5), 0.4, 1);
  for (const auto& sched : {SchedulerSpec::left_to_right(), SchedulerSpec::random(3), SchedulerSpec::confidence(),
                            SchedulerSpec::conflict_aware(),
                            SchedulerSpec::conflict_aware(1, 1, 1, SchedulerSpec::Search::subsets)}) {
    for (const auto& op : {UpdateOperator::sample(), UpdateOperator::threshold(0.95)}) {
      const auto start = DecodeState::start(block_of({0, 1, 2, 3, 4}), 5, 11);
      const auto a = run_scheduler(q, start, sched, op, 2);
      const auto b = run_scheduler(q, start, sched, op, 2);
      CHECK(a.done());
      CHECK(a.trajectory.size() == 5);
      std::map<std::size_t, int> per_round;
      for (const auto& c : a.trajectory) ++per_round[c.round];
      for (const auto& [round, n] : per_round) CHECK(n <= 2);
      CHECK(a.visible() == b.visible());
    }
  }
}

TEST_CASE("full-width sampling on an independent joint reproduces it") {
  std::mt19937_64 rng(48);
  const auto joint = product_joint(rng, 3, 3);
  const BayesOracle q(joint);
  constexpr std::size_t runs = 50000;
  std::vector<std::size_t> out(runs);
  parallel_for(runs, [&](std::size_t r) {
    const auto done =
        run_scheduler(q, DecodeState::start(block_of({0, 1, 2}), 3, r), SchedulerSpec::confidence(), UpdateOperator::sample(), 3);
    out[r] = joint->state_index(done.visible());
  });
  std::vector<double> counts(joint->state_count(), 0.0);
  for (auto s : out) counts[s] += 1.0;
  std::vector<double> expected(joint->state_count());
  for (std::size_t s = 0; s < expected.size(); ++s) expected[s] = std::exp(joint->log_mass()[s]);
  CHECK(chi_square_gof(counts, expected).p_value > 0.01);
}

TEST_CASE("spearman on a hand-ranked fixture") {
  const std::vector<double> x = {1, 2, 3, 4, 5};
  const std::vector<double> y = {5, 6, 7, 8, 7};
  // ranks of y: 1, 2, 3.5, 5, 3.5; centred cross sum 8, squares 10 and 9.5
  CHECK(std::abs(spearman(x, y) - 8.0 / std::sqrt(95.0)) < 1e-14);
  CHECK(std::abs(spearman(x, std::vector<double>{50, 40, 30, 20, 10}) + 1.0) < 1e-14);
  CHECK(std::isnan(spearman(x, std::vector<double>{1, 1, 1, 1, 1})));
}

TEST_CASE("stress harness") {
  std::mt19937_64 rng(49);
  const auto independent = product_joint(rng, 4, 2);
  const BayesOracle q(independent);
  StressConfig cfg;
  cfg.widths = {1, 2, 3};
  cfg.schedulers = {SchedulerSpec::left_to_right(), SchedulerSpec::random(1)};
  cfg.runs = 2000;
  cfg.seed = 5;
  PartialContext a = block_of({0, 1, 2, 3});
  PartialContext b = block_of({1, 2, 3});
  b.observed[0] = 1;
  const auto report = stress_test(q, *independent, {a, b}, cfg);
  CHECK(report.rows.size() == 2 * 2 * 3);
  for (const auto& row : report.rows) {
    if (row.width == 1) CHECK(row.degradation == 0.0);
    CHECK(std::abs(row.degradation) < 0.05);
    CHECK(row.tc < 1e-12);
  }
  const auto again = stress_test(q, *independent, {a, b}, cfg);
  for (std::size_t k = 0; k < report.rows.size(); ++k) CHECK(report.rows[k].nll == again.rows[k].nll);
  CHECK(report.spearman.count("tc"));
  StressConfig bad = cfg;
  bad.widths = {0};
  CHECK_THROWS(stress_test(q, *independent, {a}, bad));
}
