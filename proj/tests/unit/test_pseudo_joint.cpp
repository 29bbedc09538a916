// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include <doctest.h>

#include "curlgauge/error.hpp"
#include "curlgauge/pseudo_joint.hpp"
#include "curlgauge/tabular.hpp"
#include "support/fixtures.hpp"

using namespace curlgauge;
using namespace curlgauge::testing;

namespace {

// Two binary positions with hand-set conditionals for the (0, 0) square.
LogitTableOracle square_oracle(double qa, double qb_given_a, double qb, double qa_given_b) {
  LogitTable table(2, 2);
  auto set = [&](int position, const Assignment& visible, double p0) {
    auto row = table.row(table.index().row(position, visible));
    row[0] = std::log(p0);
    row[1] = std::log(1.0 - p0);
  };
  Assignment empty(2);
  Assignment a0(2), b0(2), a1(2), b1(2);
  a0.set(0, 0);
  a1.set(0, 1);
  b0.set(1, 0);
  b1.set(1, 1);
  set(0, empty, qa);
  set(1, empty, qb);
  set(1, a0, qb_given_a);
  set(0, b0, qa_given_b);
  set(1, a1, 0.5);
  set(0, b1, 0.5);
  return LogitTableOracle(table, "square");
}

}  // namespace

TEST_CASE("curl of a symmetric square is zero") {
  const auto q = square_oracle(0.5, 0.8, 0.5, 0.8);
  CHECK(std::abs(curl_local(q, Assignment(2), 0, 1, 0, 0).value) < 1e-15);
}

TEST_CASE("curl by direct evaluation of the four terms") {
  const auto q = square_oracle(0.5, 0.9, 0.5, 0.6);
  const auto c = curl_local(q, Assignment(2), 0, 1, 0, 0);
  CHECK(std::abs(c.value - std::log(1.5)) < 1e-12);
  CHECK(std::abs(c.pseudo_joint_log_ratio - std::log(1.5)) < 1e-12);
  CHECK(std::abs(c.log_terms[1] - std::log(0.9)) < 1e-12);
}

TEST_CASE("curl is antisymmetric in the pair and vanishes for Bayes oracles") {
  std::mt19937_64 rng(11);
  for (int n = 0; n < 20; ++n) {
    const auto joint = random_joint(rng, 3, 3);
    const PerturbedConditionalModel q(joint, 0.7, rng());
    const BayesOracle bayes(joint);
    Assignment ctx(3);
    ctx.set(2, uniform_int(rng, 0, 2));
    const int a = uniform_int(rng, 0, 2);
    const int b = uniform_int(rng, 0, 2);
    CHECK(std::abs(curl_local(q, ctx, 0, 1, a, b).value + curl_local(q, ctx, 1, 0, b, a).value) < 1e-12);
    CHECK(std::abs(curl_local(bayes, ctx, 0, 1, a, b).value) < 1e-10);
  }
}

TEST_CASE("curl error paths") {
  std::mt19937_64 rng(12);
  const BayesOracle q(random_joint(rng, 3, 2));
  Assignment ctx(3);
  ctx.set(0, 1);
  CHECK_THROWS_AS(curl_local(q, ctx, 0, 1, 0, 0), ContractViolation);
  CHECK_THROWS_AS(curl_local(q, Assignment(3), 1, 1, 0, 0), ContractViolation);
  CHECK_THROWS(curl_local(q, Assignment(3), 0, 1, 0, 7));
}

TEST_CASE("normalized curl arithmetic") {
  CurlSample zero;
  zero.log_terms = {-1.0, -2.0, -1.0, -2.0};
  CHECK(curl_normalized(zero) == 0.0);
  CurlSample s;
  s.log_terms = {-1.0, -1.0, -1.0, -1.0};
  s.value = 0.4;
  CHECK(std::abs(curl_normalized(s, 1e-6) - 0.4 / (4.0 + 1e-6)) < 1e-15);
  CHECK_THROWS_AS(curl_normalized(s, 0.0), ContractViolation);
}

TEST_CASE("pseudo-joint properties") {
  std::mt19937_64 rng(13);
  for (int n = 0; n < 20; ++n) {
    const int m = uniform_int(rng, 2, 4);
    const int v = uniform_int(rng, 2, 3);
    const auto joint = random_joint(rng, m, v);
    const PerturbedConditionalModel q(joint, 0.6, rng());
    const BayesOracle bayes(joint);
    const PartialContext ctx = random_context(rng, m, v, uniform_int(rng, 1, m));
    Order order = ctx.block;
    std::shuffle(order.begin(), order.end(), rng);
    const PseudoJointSpec spec{ctx, order};
    const Assignment base = ctx.visible(m);
    double total = 0.0;
    for_each_completion(base, ctx.block, v, [&](const Assignment& x) {
      const double lq = pseudo_joint_log_prob(q, spec, x);
      total += std::exp(lq);
      CHECK(std::abs(lq - brute_pseudo_joint(q, base, order, x)) < 1e-12);
      const double lp = pseudo_joint_log_prob(bayes, spec, x);
      CHECK(std::abs(lp - std::log(brute_mass(*joint, x) / brute_mass(*joint, base))) < 1e-10);
      if (order.size() == 1) CHECK(lq == q.log_conditional(order[0], x[order[0]], base));
    });
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
}

TEST_CASE("pseudo-joint rejects a partial assignment or a bad order") {
  std::mt19937_64 rng(14);
  const BayesOracle q(random_joint(rng, 3, 2));
  PartialContext ctx;
  ctx.block = {0, 1};
  Assignment x(3);
  x.set(0, 1);
  CHECK_THROWS_AS(pseudo_joint_log_prob(q, {ctx, {0, 1}}, x), ContractViolation);
  x.set(1, 0);
  CHECK_THROWS_AS(pseudo_joint_log_prob(q, {ctx, {0, 0}}, x), ContractViolation);
}

TEST_CASE("ecirc estimators") {
  std::mt19937_64 rng(15);
  const auto joint = random_joint(rng, 4, 3);
  PartialContext ctx;
  ctx.block = {0, 1, 3};
  ctx.observed[2] = 1;
  CHECK(ecirc_abs(BayesOracle(joint), ctx, SamplingPlan::exhaustive()).mean < 1e-10);

  const PerturbedConditionalModel q(joint, 0.8, 77);
  const Estimate exact = ecirc_abs(q, ctx, SamplingPlan::exhaustive());
  const Estimate mc = ecirc_abs(q, ctx, SamplingPlan::monte_carlo(5, 10000));
  CHECK(exact.exact);
  CHECK(!mc.exact);
  CHECK(std::abs(exact.mean - mc.mean) < 3.0 * mc.std_error);
  const Estimate exact_n = ecirc_normalized(q, ctx, SamplingPlan::exhaustive());
  const Estimate mc_n = ecirc_normalized(q, ctx, SamplingPlan::monte_carlo(6, 10000));
  CHECK(std::abs(exact_n.mean - mc_n.mean) < 3.0 * mc_n.std_error);

  const Estimate one = ecirc_abs(q, ctx, SamplingPlan::single(1, 3, 2, 0));
  CHECK(one.mean == std::abs(curl_local(q, ctx.visible(4), 1, 3, 2, 0).value));

  PartialContext lone;
  lone.block = {0};
  CHECK_THROWS_AS(ecirc_abs(q, lone, SamplingPlan::exhaustive()), ContractViolation);
}

TEST_CASE("order-swap KL") {
  std::mt19937_64 rng(16);
  const auto joint = random_joint(rng, 3, 3);
  Assignment ctx(3);
  ctx.set(1, 2);
  CHECK(std::abs(order_swap_kl(BayesOracle(joint), ctx, 0, 2, KlMode::exact_mode()).mean) < 1e-10);
  const PerturbedConditionalModel q(joint, 0.8, 3);
  const Estimate exact = order_swap_kl(q, ctx, 0, 2, KlMode::exact_mode());
  const Estimate mc = order_swap_kl(q, ctx, 0, 2, KlMode::monte_carlo(9, 50000));
  CHECK(exact.mean >= 0.0);
  CHECK(std::abs(exact.mean - mc.mean) < 3.0 * mc.std_error);
}

TEST_CASE("swap decomposition") {
  std::mt19937_64 rng(17);
  const auto joint = random_joint(rng, 4, 2);
  const PerturbedConditionalModel q(joint, 0.5, 8);
  PartialContext ctx;
  ctx.block = {0, 1, 2, 3};
  const int tokens[] = {1, 0, 1, 1};
  const Assignment x = Assignment::from_tokens(tokens);

  const auto none = swap_decomposition(q, ctx, {{0, 1, 2, 3}, {0, 1, 2, 3}, {}}, x);
  CHECK(none.terms.empty());
  CHECK(none.residual == 0.0);

  const Order start = {2, 0, 3, 1};
  const Order end = {1, 3, 0, 2};
  const SwapPath bubble{start, end, bubble_swap_path(start, end)};
  const SwapPath detour{start, end, random_swap_path(start, end, 4, rng)};
  const auto d1 = swap_decomposition(q, ctx, bubble, x);
  const auto d2 = swap_decomposition(q, ctx, detour, x);
  const double direct = pseudo_joint_log_prob(q, {ctx, start}, x) - pseudo_joint_log_prob(q, {ctx, end}, x);
  CHECK(std::abs(d1.log_ratio - direct) < 1e-12);
  CHECK(std::abs(d1.residual) < 1e-10);
  CHECK(std::abs(d2.residual) < 1e-10);
  CHECK(std::abs(d1.curl_sum - d2.curl_sum) < 1e-10);
  CHECK(d1.terms.size() != d2.terms.size());

  CHECK_THROWS_AS(swap_decomposition(q, ctx, {start, end, {1}}, x), ContractViolation);
  CHECK_THROWS_AS(swap_decomposition(q, ctx, {start, start, {7}}, x), ContractViolation);
}

TEST_CASE("order consistency check") {
  std::mt19937_64 rng(18);
  const auto joint = random_joint(rng, 4, 3);
  PartialContext ctx;
  ctx.block = {0, 1, 2};
  ctx.observed[3] = 0;
  const auto bayes = order_consistency_check(BayesOracle(joint), ctx);
  CHECK(bayes.consistent);
  CHECK(bayes.max_gap < 1e-10);
  CHECK(bayes.max_curl < 1e-10);
  CHECK(!bayes.witness);

  const auto pert = order_consistency_check(PerturbedConditionalModel(joint, 0.5, 4), ctx);
  CHECK(!pert.consistent);
  CHECK(pert.verdicts_agree());
  REQUIRE(pert.witness);
  CHECK(std::abs(pert.witness->value) > 0.0);
  CHECK(std::abs(pert.witness->value) > pert.tolerance);
  CHECK(std::abs(pert.witness->value) <= pert.max_curl);
  REQUIRE(pert.gap_witness);
  CHECK(pert.orders_checked == 6);

  PartialContext big;
  big.block = {0, 1, 2, 3, 4, 5};
  const auto wide = random_joint(rng, 6, 2);
  CHECK_THROWS_AS(order_consistency_check(BayesOracle(wide), big), CapExceeded);
}

TEST_CASE("curl scan report") {
  std::mt19937_64 rng(19);
  const auto joint = random_joint(rng, 3, 3);
  PartialContext ctx;
  ctx.block = {0, 1, 2};
  const PerturbedConditionalModel q(joint, 0.5, 4);
  const auto report = curl_scan(q, ctx, SamplingPlan::exhaustive(), 3, 10);
  CHECK(report.order_swap_kl.size() == 3);
  CHECK(report.witnesses.size() == 3);
  CHECK(report.histogram.size() == 10);
  std::size_t total = 0;
  for (auto c : report.histogram) total += c;
  CHECK(total == report.ecirc_abs.n);
  CHECK(std::abs(report.witnesses.front().value) == doctest::Approx(report.max_curl));
  for (std::size_t k = 1; k < report.witnesses.size(); ++k) {
    CHECK(std::abs(report.witnesses[k - 1].value) >= std::abs(report.witnesses[k].value));
  }
}
