// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include <doctest.h>

#include "curlgauge/dependence.hpp"
#include "curlgauge/error.hpp"
#include "support/fixtures.hpp"

using namespace curlgauge;
using namespace curlgauge::testing;

namespace {

std::shared_ptr<const TabularJointModel> product_joint(std::mt19937_64& rng, int m, int v) {
  std::vector<std::vector<double>> marg(static_cast<std::size_t>(m), std::vector<double>(static_cast<std::size_t>(v)));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& row : marg) {
    for (double& x : row) x = normal(rng);
  }
  std::size_t n = 1;
  for (int k = 0; k < m; ++k) n *= static_cast<std::size_t>(v);
  std::vector<double> w(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    const auto x = decode_state(s, m, v);
    for (int k = 0; k < m; ++k) w[s] += marg[static_cast<std::size_t>(k)][static_cast<std::size_t>(x[static_cast<std::size_t>(k)])];
  }
  return std::make_shared<const TabularJointModel>(TabularJointModel::from_log_weights(v, m, w));
}

// Entropy-form TC straight from the joint table, without BlockDistribution.
double brute_tc(const TabularJointModel& joint, const PartialContext& ctx) {
  const int m = joint.positions();
  const int v = joint.vocabulary().size();
  const Assignment base = ctx.visible(m);
  const double norm = brute_mass(joint, base);
  double joint_h = 0.0;
  for_each_completion(base, ctx.block, v, [&](const Assignment& x) {
    const double p = brute_mass(joint, x) / norm;
    joint_h -= p * std::log(p);
  });
  double marg_h = 0.0;
  for (int i : ctx.block) {
    for (int a = 0; a < v; ++a) {
      const double p = std::exp(brute_conditional(joint, i, a, base));
      marg_h -= p * std::log(p);
    }
  }
  return marg_h - joint_h;
}

}  // namespace

TEST_CASE("total correlation of independent positions is zero") {
  std::mt19937_64 rng(21);
  const auto joint = product_joint(rng, 4, 3);
  PartialContext ctx;
  ctx.block = {0, 1, 2, 3};
  CHECK(std::abs(total_correlation(*joint, ctx)) < 1e-12);
  CHECK(std::abs(independent_parallel_gap(BayesOracle(joint), *joint, ctx)) < 1e-12);
  for (const auto& [pair, cmi] : pairwise_cmi(*joint, ctx)) CHECK(std::abs(cmi) < 1e-12);
}

TEST_CASE("two perfectly correlated fair bits") {
  const double h = std::log(0.5);
  const auto joint = TabularJointModel::from_log_weights(2, 2, {h, -1e6, -1e6, h});
  PartialContext ctx;
  ctx.block = {0, 1};
  CHECK(std::abs(total_correlation(joint, ctx) - std::log(2.0)) < 1e-12);
  CHECK(std::abs(pairwise_cmi(joint, ctx).at({0, 1}) - std::log(2.0)) < 1e-12);
}

TEST_CASE("total correlation forms agree with a brute-force entropy form") {
  std::mt19937_64 rng(22);
  for (int n = 0; n < 30; ++n) {
    const int m = uniform_int(rng, 2, 4);
    const int v = uniform_int(rng, 2, 3);
    const auto joint = random_joint(rng, m, v, 1.5);
    const PartialContext ctx = random_context(rng, m, v, uniform_int(rng, 1, m));
    const auto forms = total_correlation_forms(*joint, ctx);
    CHECK(std::abs(forms.kl_form - forms.entropy_form()) < 1e-10);
    CHECK(std::abs(forms.kl_form - brute_tc(*joint, ctx)) < 1e-10);
    CHECK(forms.kl_form >= -1e-12);
    if (ctx.block.size() == 2) {
      CHECK(std::abs(pairwise_cmi(*joint, ctx).begin()->second - forms.kl_form) < 1e-12);
    }
  }
}

TEST_CASE("independent-parallel gap equals TC for Bayes and exceeds zero otherwise") {
  std::mt19937_64 rng(23);
  for (int n = 0; n < 20; ++n) {
    const auto joint = random_joint(rng, 3, 3, 1.5);
    const PartialContext ctx = random_context(rng, 3, 3, uniform_int(rng, 1, 3));
    const double tc = total_correlation(*joint, ctx);
    CHECK(std::abs(independent_parallel_gap(BayesOracle(joint), *joint, ctx) - tc) < 1e-10);
    CHECK(independent_parallel_gap(PerturbedConditionalModel(joint, 0.5, 3), *joint, ctx) >= 0.0);
  }
}

TEST_CASE("dependence report fields") {
  std::mt19937_64 rng(24);
  const auto joint = random_joint(rng, 4, 2, 1.5);
  PartialContext ctx;
  ctx.block = {0, 1, 3};
  ctx.observed[2] = 1;
  const auto r = dependence_report(BayesOracle(joint), *joint, ctx);
  CHECK(r.pairwise_cmi.size() == 3);
  double sum = 0.0;
  for (const auto& [pair, cmi] : r.pairwise_cmi) {
    CHECK(pair.first < pair.second);
    sum += cmi;
  }
  CHECK(r.sum_pairwise_cmi == doctest::Approx(sum));
  CHECK(r.cmi_proxy_gap == doctest::Approx(sum - r.tc));
  CHECK(std::abs(r.tc - (r.sum_marginal_entropies - r.joint_entropy)) < 1e-10);
}

TEST_CASE("block distribution marginals sum to one") {
  std::mt19937_64 rng(25);
  const auto joint = random_joint(rng, 4, 3);
  PartialContext ctx;
  ctx.block = {1, 2, 3};
  ctx.observed[0] = 2;
  const BlockDistribution dist(*joint, ctx);
  CHECK(dist.size() == 27);
  for (std::size_t s = 0; s < 3; ++s) {
    double total = 0.0;
    for (double x : dist.marginal(s)) total += std::exp(x);
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
  const Assignment base = ctx.visible(4);
  for (int a = 0; a < 3; ++a) {
    CHECK(std::abs(dist.marginal(1)[static_cast<std::size_t>(a)] - brute_conditional(*joint, 2, a, base)) < 1e-10);
  }
}

TEST_CASE("dependence error paths") {
  std::mt19937_64 rng(26);
  const auto joint = random_joint(rng, 3, 2);
  PartialContext bad;
  bad.block = {0, 3};
  CHECK_THROWS_AS(total_correlation(*joint, bad), DimensionError);
  PartialContext clash;
  clash.block = {0, 1};
  clash.observed[0] = 1;
  CHECK_THROWS(total_correlation(*joint, clash));
}
