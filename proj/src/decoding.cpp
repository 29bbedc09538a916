// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0

#include "curlgauge/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "curlgauge/dependence.hpp"
#include "curlgauge/error.hpp"
#include "curlgauge/numeric.hpp"
#include "curlgauge/order_error.hpp"
#include "curlgauge/parallel.hpp"
#include "curlgauge/pseudo_joint.hpp"

namespace curlgauge {

UpdateOperator UpdateOperator::threshold(double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError(fmt::format("threshold tau {} outside (0, 1]", tau));
  return {Kind::threshold, tau};
}

std::string UpdateOperator::name() const {
  switch (kind) {
    case Kind::argmax:
      return "argmax";
    case Kind::sample:
      return "sample";
    case Kind::threshold:
      return fmt::format("threshold({:g})", tau);
  }
  return "unknown";
}

DecodeState DecodeState::start(PartialContext context, int positions, std::uint64_t rng_seed) {
  DecodeState s;
  std::sort(context.block.begin(), context.block.end());
  s.context = std::move(context);
  s.positions = positions;
  s.rng_seed = rng_seed;
  return s;
}

std::vector<int> DecodeState::unresolved() const {
  std::vector<int> out = context.block;
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

int argmax_token(std::span<const double> log_q) {
  int best = 0;
  for (std::size_t a = 1; a < log_q.size(); ++a) {
    if (log_q[a] > log_q[static_cast<std::size_t>(best)]) best = static_cast<int>(a);
  }
  return best;
}

double max_prob(std::span<const double> log_q) { return std::exp(log_q[static_cast<std::size_t>(argmax_token(log_q))]); }

void check_unresolved(const DecodeState& state, int position) {
  if (state.context.observed.contains(position)) {
    throw ContractViolation(fmt::format("position {} is already committed", position));
  }
  if (std::find(state.context.block.begin(), state.context.block.end(), position) == state.context.block.end()) {
    throw ContractViolation(fmt::format("position {} is not in the block", position));
  }
}

}  // namespace

int choose_token(const UpdateOperator& op, std::span<const double> log_q, std::uint64_t rng_seed, int position) {
  switch (op.kind) {
    case UpdateOperator::Kind::argmax:
      return argmax_token(log_q);
    case UpdateOperator::Kind::sample:
      return sample_from_logs(log_q, keyed_uniform(rng_seed, static_cast<std::uint64_t>(position)));
    case UpdateOperator::Kind::threshold: {
      const int a = argmax_token(log_q);
      return std::exp(log_q[static_cast<std::size_t>(a)]) >= op.tau ? a : -1;
    }
  }
  return -1;
}

void commit(DecodeState& state, int position, int token, const std::string& op, std::size_t round) {
  check_unresolved(state, position);
  auto& block = state.context.block;
  block.erase(std::find(block.begin(), block.end(), position));
  state.context.observed[position] = token;
  state.trajectory.push_back({round, position, token, op});
}

DecodeState apply_update(const ConditionalOracle& oracle, const DecodeState& state, const UpdateOperator& op,
                         int position) {
  check_unresolved(state, position);
  const auto log_q = oracle.log_conditional(position, state.visible());
  const int token = choose_token(op, log_q, state.rng_seed, position);
  DecodeState next = state;
  if (token >= 0) {
    const std::size_t round = state.trajectory.empty() ? 0 : state.trajectory.back().round + 1;
    commit(next, position, token, op.name(), round);
  }
  return next;
}

namespace {

std::vector<double> predictive_object(const ConditionalOracle& oracle, const DecodeState& state,
                                      const std::vector<int>& remaining) {
  const Assignment visible = state.visible();
  const auto v = static_cast<std::size_t>(oracle.vocabulary().size());
  std::vector<std::vector<double>> marginals;
  for (int r : remaining) marginals.push_back(oracle.log_conditional(r, visible));
  std::size_t total = 1;
  for (std::size_t k = 0; k < remaining.size(); ++k) total *= v;
  std::vector<double> out(total);
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rest = idx;
    double lp = 0.0;
    for (std::size_t k = remaining.size(); k-- > 0;) {
      lp += marginals[k][rest % v];
      rest /= v;
    }
    out[idx] = std::exp(lp);
  }
  return out;
}

DecodeState commit_pair(const ConditionalOracle& oracle, const DecodeState& state, const UpdateOperator& op,
                        int first, int second) {
  DecodeState s = apply_update(oracle, state, op, first);
  return apply_update(oracle, s, op, second);
}

}  // namespace

CommutatorReport commutator(const ConditionalOracle& oracle, const DecodeState& state, const UpdateOperator& op,
                            int i, int j) {
  if (i == j) throw ContractViolation("commutator needs two distinct positions");
  check_unresolved(state, i);
  check_unresolved(state, j);
  CommutatorReport r;
  r.i = i;
  r.j = j;
  for (int p : state.unresolved()) {
    if (p != i && p != j) r.remaining.push_back(p);
  }
  if (r.remaining.empty()) {
    throw DegenerateComparison(
        fmt::format("no coordinate remains after committing {} and {}; enlarge the block", i, j));
  }
  std::size_t states = 1;
  for (std::size_t k = 0; k < r.remaining.size(); ++k) {
    states *= static_cast<std::size_t>(oracle.vocabulary().size());
    if (states > kMaxBlockStates) throw CapExceeded("commutator predictive object too large");
  }
  const DecodeState zij = commit_pair(oracle, state, op, i, j);
  const DecodeState zji = commit_pair(oracle, state, op, j, i);
  r.visible_ij = zij.visible();
  r.visible_ji = zji.visible();
  r.predictive_ij = predictive_object(oracle, zij, r.remaining);
  r.predictive_ji = predictive_object(oracle, zji, r.remaining);
  r.value = std::sqrt(jensen_shannon(r.predictive_ij, r.predictive_ji));
  return r;
}

ConflictReport conflict_score(const ConditionalOracle& oracle, const DecodeState& state, const UpdateOperator& op,
                              const std::vector<int>& block) {
  if (block.size() < 2) throw ContractViolation("conflict score needs at least two positions");
  std::vector<int> sorted = block;
  std::sort(sorted.begin(), sorted.end());
  ConflictReport out;
  for (std::size_t s = 0; s < sorted.size(); ++s) {
    for (std::size_t t = s + 1; t < sorted.size(); ++t) {
      try {
        const double c = commutator(oracle, state, op, sorted[s], sorted[t]).value;
        out.pairs.push_back({{sorted[s], sorted[t]}, c});
        out.value += c;
      } catch (const DegenerateComparison&) {
        ++out.excluded_pairs;
        out.degenerate = true;
      }
    }
  }
  return out;
}

double oracle_pair_dependence(const ConditionalOracle& oracle, const DecodeState& state,
                              const std::vector<int>& block) {
  const Assignment visible = state.visible();
  const int v = oracle.vocabulary().size();
  const auto vs = static_cast<std::size_t>(v);
  double total = 0.0;
  for (std::size_t s = 0; s < block.size(); ++s) {
    const auto first = oracle.log_conditional(block[s], visible);
    for (std::size_t t = s + 1; t < block.size(); ++t) {
      std::vector<double> joint(vs * vs);
      Assignment with = visible;
      for (int a = 0; a < v; ++a) {
        with.set(block[s], a);
        const auto second = oracle.log_conditional(block[t], with);
        for (std::size_t b = 0; b < vs; ++b) joint[static_cast<std::size_t>(a) * vs + b] = first[static_cast<std::size_t>(a)] + second[b];
      }
      std::vector<double> mb(vs, -std::numeric_limits<double>::infinity());
      for (std::size_t b = 0; b < vs; ++b) {
        std::vector<double> col(vs);
        for (std::size_t a = 0; a < vs; ++a) col[a] = joint[a * vs + b];
        mb[b] = logsumexp(col);
      }
      double mi = 0.0;
      for (std::size_t a = 0; a < vs; ++a) {
        for (std::size_t b = 0; b < vs; ++b) {
          const double l = joint[a * vs + b];
          mi += std::exp(l) * (l - first[a] - mb[b]);
        }
      }
      total += std::max(mi, 0.0);
    }
  }
  return total;
}

SchedulerSpec SchedulerSpec::random(std::uint64_t seed) {
  SchedulerSpec s;
  s.kind = Kind::random;
  s.seed = seed;
  return s;
}

SchedulerSpec SchedulerSpec::confidence() {
  SchedulerSpec s;
  s.kind = Kind::confidence;
  return s;
}

SchedulerSpec SchedulerSpec::conflict_aware(double l1, double l2, double l3, Search search) {
  SchedulerSpec s;
  s.kind = Kind::conflict_aware;
  s.lambda_confidence = l1;
  s.lambda_conflict = l2;
  s.lambda_dependence = l3;
  s.search = search;
  return s;
}

std::string SchedulerSpec::name() const {
  switch (kind) {
    case Kind::left_to_right:
      return "left-to-right";
    case Kind::random:
      return fmt::format("random({})", seed);
    case Kind::confidence:
      return "confidence";
    case Kind::conflict_aware:
      return fmt::format("conflict-aware({:g},{:g},{:g},{})", lambda_confidence, lambda_conflict, lambda_dependence,
                         search == Search::contiguous ? "contiguous" : "subsets");
  }
  return "unknown";
}

namespace {

std::vector<std::vector<int>> candidate_blocks(const std::vector<int>& open, std::size_t w,
                                               SchedulerSpec::Search search) {
  std::vector<std::vector<int>> out;
  if (search == SchedulerSpec::Search::contiguous || open.size() > 8) {
    for (std::size_t s = 0; s + w <= open.size(); ++s) {
      out.emplace_back(open.begin() + static_cast<std::ptrdiff_t>(s),
                       open.begin() + static_cast<std::ptrdiff_t>(s + w));
    }
    return out;
  }
  // w-subsets in lexicographic order
  std::vector<bool> pick(open.size(), false);
  std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(w), true);
  do {
    std::vector<int> b;
    for (std::size_t k = 0; k < open.size(); ++k) {
      if (pick[k]) b.push_back(open[k]);
    }
    out.push_back(std::move(b));
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return out;
}

std::vector<int> select_positions(const ConditionalOracle& oracle, const DecodeState& state,
                                  const SchedulerSpec& sched, const UpdateOperator& op, std::size_t w,
                                  const std::map<int, std::vector<double>>& conds) {
  const std::vector<int> open = state.unresolved();
  w = std::min(w, open.size());
  switch (sched.kind) {
    case SchedulerSpec::Kind::left_to_right:
      return {open.begin(), open.begin() + static_cast<std::ptrdiff_t>(w)};
    case SchedulerSpec::Kind::random: {
      auto engine = keyed_engine(sched.seed, state.rng_seed, state.trajectory.size());
      std::vector<int> shuffled = open;
      std::shuffle(shuffled.begin(), shuffled.end(), engine);
      shuffled.resize(w);
      std::sort(shuffled.begin(), shuffled.end());
      return shuffled;
    }
    case SchedulerSpec::Kind::confidence: {
      std::vector<int> ranked = open;
      std::stable_sort(ranked.begin(), ranked.end(),
                       [&](int x, int y) { return max_prob(conds.at(x)) > max_prob(conds.at(y)); });
      ranked.resize(w);
      std::sort(ranked.begin(), ranked.end());
      return ranked;
    }
    case SchedulerSpec::Kind::conflict_aware: {
      std::vector<int> best;
      double best_score = std::numeric_limits<double>::infinity();
      for (auto& b : candidate_blocks(open, w, sched.search)) {
        double confidence = 0.0;
        for (int p : b) confidence += max_prob(conds.at(p));
        confidence /= static_cast<double>(b.size());
        double score = -sched.lambda_confidence * confidence;
        if (b.size() >= 2) {
          if (sched.lambda_conflict != 0.0) score += sched.lambda_conflict * conflict_score(oracle, state, op, b).value;
          if (sched.lambda_dependence != 0.0) score += sched.lambda_dependence * oracle_pair_dependence(oracle, state, b);
        }
        if (score < best_score) {
          best_score = score;
          best = std::move(b);
        }
      }
      return best;
    }
  }
  return {};
}

}  // namespace

DecodeState run_scheduler(const ConditionalOracle& oracle, DecodeState state, const SchedulerSpec& scheduler,
                          const UpdateOperator& op, std::size_t width) {
  if (width < 1) throw ConfigError("parallelism width must be at least 1");
  std::size_t round = 0;
  while (!state.done()) {
    const Assignment visible = state.visible();
    std::map<int, std::vector<double>> conds;
    for (int p : state.context.block) conds[p] = oracle.log_conditional(p, visible);
    const std::vector<int> chosen = select_positions(oracle, state, scheduler, op, width, conds);

    std::vector<std::pair<int, int>> writes;
    for (int p : chosen) {
      const int token = choose_token(op, conds.at(p), state.rng_seed, p);
      if (token >= 0) writes.emplace_back(p, token);
    }
    if (writes.empty()) {
      int best = chosen.front();
      for (int p : chosen) {
        if (max_prob(conds.at(p)) > max_prob(conds.at(best))) best = p;
      }
      commit(state, best, argmax_token(conds.at(best)), "argmax-forced", round);
    } else {
      for (const auto& [p, token] : writes) commit(state, p, token, op.name(), round);
    }
    ++round;
  }
  return state;
}

StressReport stress_test(const ConditionalOracle& oracle, const TabularJointModel& joint,
                         const std::vector<PartialContext>& contexts, const StressConfig& config) {
  if (config.runs == 0) throw ConfigError("stress test needs at least one run");
  if (config.schedulers.empty() || config.widths.empty()) throw ConfigError("stress test needs widths and schedulers");
  StressReport report;
  for (std::size_t c = 0; c < contexts.size(); ++c) {
    const PartialContext& ctx = contexts[c];
    ctx.validate(joint.positions(), joint.vocabulary());
    for (std::size_t w : config.widths) {
      if (w < 1 || w > ctx.block.size()) {
        throw ConfigError(fmt::format("width {} outside [1, {}] for context {}", w, ctx.block.size(), c));
      }
    }
    const Assignment base = ctx.visible(joint.positions());
    const double log_norm = joint.log_marginal(base);

    StressRow proto;
    proto.context = c;
    proto.ecirc_abs = ctx.block.size() >= 2 ? ecirc_abs(oracle, ctx, SamplingPlan::exhaustive()).mean : 0.0;
    proto.tc = total_correlation(joint, ctx);
    for (int p : ctx.block) proto.mean_eps += local_estimation_error(oracle, joint, base, p);
    proto.mean_eps /= static_cast<double>(ctx.block.size());
    const DecodeState initial = DecodeState::start(ctx, joint.positions(), config.seed);
    if (ctx.block.size() >= 2) proto.conflict = conflict_score(oracle, initial, config.op, initial.unresolved()).value;

    auto mean_nll = [&](const SchedulerSpec& sched, std::size_t w) {
      std::vector<double> nll(config.runs);
      parallel_for(config.runs, [&](std::size_t r) {
        const DecodeState s0 = DecodeState::start(ctx, joint.positions(), config.seed + r);
        const DecodeState done = run_scheduler(oracle, s0, sched, config.op, w);
        nll[r] = -(joint.log_marginal(done.visible()) - log_norm);
      });
      double total = 0.0;
      for (double x : nll) total += x;
      return total / static_cast<double>(config.runs);
    };

    for (const auto& sched : config.schedulers) {
      const double baseline = mean_nll(sched, 1);
      for (std::size_t w : config.widths) {
        StressRow row = proto;
        row.scheduler = sched.name();
        row.width = w;
        row.nll = w == 1 ? baseline : mean_nll(sched, w);
        row.degradation = row.nll - baseline;
        report.rows.push_back(std::move(row));
      }
    }
  }

  std::vector<double> deg, ecirc, tc, eps, conflict;
  for (const auto& r : report.rows) {
    if (r.width <= 1) continue;
    deg.push_back(r.degradation);
    ecirc.push_back(r.ecirc_abs);
    tc.push_back(r.tc);
    eps.push_back(r.mean_eps);
    conflict.push_back(r.conflict);
  }
  report.spearman["ecirc_abs"] = spearman(deg, ecirc);
  report.spearman["tc"] = spearman(deg, tc);
  report.spearman["mean_eps"] = spearman(deg, eps);
  report.spearman["conflict"] = spearman(deg, conflict);
  return report;
}

}  // namespace curlgauge
