// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0

#include "curlgauge/synthetic.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <optional>
#include <random>

#include <fmt/format.h>

#include "curlgauge/dependence.hpp"
#include "curlgauge/parallel.hpp"

namespace curlgauge {

std::string to_string(SyntheticTaskSpec::Family f) {
  switch (f) {
    case SyntheticTaskSpec::Family::chain:
      return "chain";
    case SyntheticTaskSpec::Family::exchangeable:
      return "exchangeable";
    case SyntheticTaskSpec::Family::tc_ladder:
      return "tc-ladder";
    case SyntheticTaskSpec::Family::custom_table:
      return "custom-table";
  }
  return "unknown";
}

std::string to_string(TrainConfig::Coverage c) {
  switch (c) {
    case TrainConfig::Coverage::prefix_only:
      return "prefix-only";
    case TrainConfig::Coverage::all_masks:
      return "all-masks";
    case TrainConfig::Coverage::fraction:
      return "fraction";
  }
  return "unknown";
}

namespace {

std::size_t state_count(int positions, int vocab) {
  std::size_t n = 1;
  for (int k = 0; k < positions; ++k) n *= static_cast<std::size_t>(vocab);
  return n;
}

std::vector<double> normal_draws(std::uint64_t seed, std::uint64_t stream, std::size_t n, double scale) {
  auto engine = keyed_engine(seed, stream);
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> out(n);
  for (double& x : out) x = normal(engine);
  return out;
}

std::vector<double> ladder_weights(int m, int v, double beta, const std::vector<double>& field) {
  std::vector<double> w(state_count(m, v));
  for (std::size_t s = 0; s < w.size(); ++s) {
    std::vector<int> x(static_cast<std::size_t>(m));
    std::size_t rest = s;
    for (int k = m; k-- > 0;) {
      x[static_cast<std::size_t>(k)] = static_cast<int>(rest % static_cast<std::size_t>(v));
      rest /= static_cast<std::size_t>(v);
    }
    int agree = 0;
    double lw = 0.0;
    for (int k = 0; k < m; ++k) {
      lw += field[static_cast<std::size_t>(x[static_cast<std::size_t>(k)])];
      for (int l = k + 1; l < m; ++l) agree += x[static_cast<std::size_t>(k)] == x[static_cast<std::size_t>(l)];
    }
    w[s] = lw + beta * agree;
  }
  return w;
}

double full_block_tc(const TabularJointModel& joint) {
  PartialContext ctx;
  for (int p = 0; p < joint.positions(); ++p) ctx.block.push_back(p);
  return total_correlation(joint, ctx);
}

}  // namespace

TabularJointModel generate_joint(const SyntheticTaskSpec& spec) {
  const int m = spec.positions;
  const int v = spec.vocab_size;
  if (m < 1 || m > kMaxPositions) throw CapExceeded(fmt::format("positions {} outside [1, {}]", m, kMaxPositions));
  const Vocabulary vocab(v);
  const auto vs = static_cast<std::size_t>(v);
  const std::size_t n = state_count(m, v);

  switch (spec.family) {
    case SyntheticTaskSpec::Family::chain: {
      if (!std::isfinite(spec.beta) || spec.beta < 0.0) {
        throw ConfigError(fmt::format("chain coupling must be finite and non-negative, got {}", spec.beta));
      }
      const auto h = normal_draws(spec.seed, 1, vs, 0.5);
      std::vector<double> log_init(h);
      log_softmax(log_init);
      // log T(b | a) = beta [a == b] + h(b) - log Z(a)
      std::vector<double> log_t(vs * vs);
      for (std::size_t a = 0; a < vs; ++a) {
        std::span<double> r(log_t.data() + a * vs, vs);
        for (std::size_t b = 0; b < vs; ++b) r[b] = (a == b ? spec.beta : 0.0) + h[b];
        log_softmax(r);
      }
      std::vector<double> w(n);
      for (std::size_t s = 0; s < n; ++s) {
        std::vector<std::size_t> x(static_cast<std::size_t>(m));
        std::size_t rest = s;
        for (int k = m; k-- > 0;) {
          x[static_cast<std::size_t>(k)] = rest % vs;
          rest /= vs;
        }
        double lw = log_init[x[0]];
        for (std::size_t k = 1; k < x.size(); ++k) lw += log_t[x[k - 1] * vs + x[k]];
        w[s] = lw;
      }
      return TabularJointModel::from_log_weights(
          v, m, std::move(w), fmt::format("chain(beta={:g},m={},V={},seed={})", spec.beta, m, v, spec.seed));
    }
    case SyntheticTaskSpec::Family::exchangeable: {
      if (spec.components < 1) throw ConfigError("exchangeable family needs at least one component");
      const auto c = static_cast<std::size_t>(spec.components);
      std::vector<double> log_mix = normal_draws(spec.seed, 2, c, 0.5);
      log_softmax(log_mix);
      std::vector<double> log_theta = normal_draws(spec.seed, 3, c * vs, 1.5);
      for (std::size_t k = 0; k < c; ++k) log_softmax(std::span<double>(log_theta.data() + k * vs, vs));
      std::vector<double> w(n);
      std::vector<double> per_component(c);
      for (std::size_t s = 0; s < n; ++s) {
        // Token counts make the weight a symmetric function of the state.
        std::vector<int> counts(vs, 0);
        std::size_t rest = s;
        for (int k = 0; k < m; ++k) {
          ++counts[rest % vs];
          rest /= vs;
        }
        for (std::size_t k = 0; k < c; ++k) {
          double lw = log_mix[k];
          for (std::size_t a = 0; a < vs; ++a) lw += counts[a] * log_theta[k * vs + a];
          per_component[k] = lw;
        }
        w[s] = logsumexp(per_component);
      }
      return TabularJointModel::from_log_weights(
          v, m, std::move(w), fmt::format("exchangeable(K={},m={},V={},seed={})", spec.components, m, v, spec.seed));
    }
    case SyntheticTaskSpec::Family::tc_ladder: {
      if (spec.level < 0) throw ConfigError(fmt::format("tc-ladder level must be >= 0, got {}", spec.level));
      if (m < 2) throw ConfigError("tc-ladder needs at least two positions");
      const auto field = normal_draws(spec.seed, 4, vs, 0.15);
      auto joint = TabularJointModel::from_log_weights(
          v, m, ladder_weights(m, v, kLadderStep * spec.level, field),
          fmt::format("tc-ladder(level={},m={},V={},seed={})", spec.level, m, v, spec.seed));
      if (spec.level > 0) {
        const auto lower = TabularJointModel::from_log_weights(
            v, m, ladder_weights(m, v, kLadderStep * (spec.level - 1), field));
        const double tc_here = full_block_tc(joint);
        const double tc_below = full_block_tc(lower);
        if (!(tc_here > tc_below)) {
          throw Error(fmt::format("tc-ladder not monotone at level {}: {} <= {}", spec.level, tc_here, tc_below));
        }
      }
      return joint;
    }
    case SyntheticTaskSpec::Family::custom_table: {
      if (spec.table.size() != n) {
        throw DimensionError(fmt::format("custom table has {} entries, expected {}", spec.table.size(), n));
      }
      return TabularJointModel::from_log_weights(v, m, spec.table, "custom-table");
    }
  }
  throw ConfigError("unknown synthetic family");
}

SquareSpace::SquareSpace(int positions, int vocab_size) : positions_(positions), vocab_(vocab_size) {
  if (positions < 2) throw ContractViolation("squares need at least two positions");
  const auto v = static_cast<std::uint64_t>(vocab_size);
  for (unsigned mask = 0; mask < (1u << positions); ++mask) {
    const int visible = std::popcount(mask);
    const int open = positions - visible;
    if (open < 2) continue;
    std::uint64_t count = static_cast<std::uint64_t>(open * (open - 1) / 2) * v * v;
    for (int k = 0; k < visible; ++k) count *= v;
    masks_.push_back(mask);
    offsets_.push_back(total_);
    total_ += count;
  }
}

SquareSpace::Square SquareSpace::at(std::uint64_t index) const {
  if (index >= total_) throw ContractViolation("square index out of range");
  const auto k = static_cast<std::size_t>(std::upper_bound(offsets_.begin(), offsets_.end(), index) - offsets_.begin()) - 1;
  const unsigned mask = masks_[k];
  std::uint64_t off = index - offsets_[k];
  const auto v = static_cast<std::uint64_t>(vocab_);
  Square sq;
  sq.b = static_cast<int>(off % v);
  off /= v;
  sq.a = static_cast<int>(off % v);
  off /= v;
  std::vector<int> open;
  std::vector<int> visible;
  for (int p = 0; p < positions_; ++p) ((mask >> p) & 1u ? visible : open).push_back(p);
  const auto pairs = static_cast<std::uint64_t>(open.size() * (open.size() - 1) / 2);
  std::uint64_t pair = off % pairs;
  off /= pairs;
  for (std::size_t s = 0; s < open.size(); ++s) {
    const std::uint64_t row = open.size() - 1 - s;
    if (pair < row) {
      sq.i = open[s];
      sq.j = open[s + 1 + pair];
      break;
    }
    pair -= row;
  }
  sq.context = Assignment(positions_);
  for (std::size_t t = visible.size(); t-- > 0;) {
    sq.context.set(visible[t], static_cast<int>(off % v));
    off /= v;
  }
  return sq;
}

namespace {

struct SquareTerms {
  double curl = 0.0;
  double magnitude = 0.0;  // sum of |log q| over the four terms
};

SquareTerms square_terms(const ConditionalOracle& oracle, const SquareSpace::Square& sq) {
  Assignment with_i = sq.context;
  with_i.set(sq.i, sq.a);
  Assignment with_j = sq.context;
  with_j.set(sq.j, sq.b);
  const double l0 = oracle.log_conditional(sq.i, sq.a, sq.context);
  const double l1 = oracle.log_conditional(sq.j, sq.b, with_i);
  const double l2 = oracle.log_conditional(sq.j, sq.b, sq.context);
  const double l3 = oracle.log_conditional(sq.i, sq.a, with_j);
  return {(l0 + l1) - (l2 + l3), std::abs(l0) + std::abs(l1) + std::abs(l2) + std::abs(l3)};
}

template <typename Fn>
Estimate mean_over_squares(const SquareSpace& space, std::uint64_t count, Fn&& value_at, bool exact) {
  std::vector<double> values(static_cast<std::size_t>(count));
  parallel_for(values.size(), [&](std::size_t k) { values[k] = value_at(k); });
  RunningStats stats;
  for (double x : values) stats.add(x);
  (void)space;
  return stats.estimate(exact);
}

}  // namespace

Estimate ecirc_penalty(const ConditionalOracle& oracle, const SamplingPlan& plan, double epsilon) {
  if (!(epsilon > 0.0)) throw ContractViolation("curl epsilon must be positive");
  const SquareSpace space(oracle.positions(), oracle.vocabulary().size());
  auto squared = [&](const SquareSpace::Square& sq) {
    const auto t = square_terms(oracle, sq);
    const double c = std::abs(t.curl) / (t.magnitude + epsilon);
    return c * c;
  };
  switch (plan.kind) {
    case SamplingPlan::Kind::exhaustive:
      return mean_over_squares(space, space.size(), [&](std::size_t k) { return squared(space.at(k)); }, true);
    case SamplingPlan::Kind::monte_carlo: {
      if (plan.samples == 0) throw ContractViolation("Monte Carlo plan needs samples");
      auto engine = keyed_engine(plan.seed, 0x5e9a);
      std::uniform_int_distribution<std::uint64_t> pick(0, space.size() - 1);
      std::vector<std::uint64_t> idx(plan.samples);
      for (auto& x : idx) x = pick(engine);
      return mean_over_squares(space, idx.size(), [&](std::size_t k) { return squared(space.at(idx[k])); }, false);
    }
    case SamplingPlan::Kind::single: {
      SquareSpace::Square sq{Assignment(oracle.positions()), plan.tuple[0], plan.tuple[1], plan.tuple[2],
                             plan.tuple[3]};
      Estimate e;
      e.mean = squared(sq);
      e.n = 1;
      return e;
    }
  }
  return {};
}

Estimate mean_ecirc_abs(const ConditionalOracle& oracle, SquareFilter filter) {
  const SquareSpace space(oracle.positions(), oracle.vocabulary().size());
  std::vector<std::uint64_t> chosen;
  for (std::uint64_t k = 0; k < space.size(); ++k) {
    if (filter == SquareFilter::all) {
      chosen.push_back(k);
      continue;
    }
    const unsigned mask = space.at(k).context.mask();
    const bool prefix = (mask & (mask + 1)) == 0;
    if (prefix == (filter == SquareFilter::prefix)) chosen.push_back(k);
  }
  return mean_over_squares(space, chosen.size(),
                           [&](std::size_t k) { return std::abs(square_terms(oracle, space.at(chosen[k])).curl); },
                           true);
}

std::vector<std::pair<int, unsigned>> covered_patterns(int positions, const TrainConfig& config) {
  std::vector<std::pair<int, unsigned>> all;
  for (int i = 0; i < positions; ++i) {
    for (unsigned mask = 0; mask < (1u << positions); ++mask) {
      if (!((mask >> i) & 1u)) all.emplace_back(i, mask);
    }
  }
  switch (config.coverage) {
    case TrainConfig::Coverage::all_masks:
      return all;
    case TrainConfig::Coverage::prefix_only: {
      std::vector<std::pair<int, unsigned>> out;
      for (int i = 0; i < positions; ++i) out.emplace_back(i, (1u << i) - 1u);
      return out;
    }
    case TrainConfig::Coverage::fraction: {
      if (!(config.fraction > 0.0 && config.fraction <= 1.0)) {
        throw ConfigError(fmt::format("coverage fraction {} outside (0, 1]", config.fraction));
      }
      auto engine = keyed_engine(config.seed, 0xc07e);
      std::shuffle(all.begin(), all.end(), engine);
      const auto keep = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(config.fraction * static_cast<double>(all.size()))));
      all.resize(keep);
      std::sort(all.begin(), all.end());
      return all;
    }
  }
  return all;
}

TrainedTabularOracle train_tabular(const TabularJointModel& joint, const TrainConfig& config) {
  if (!(config.learning_rate > 0.0) || !std::isfinite(config.learning_rate)) {
    throw ConfigError("learning rate must be positive and finite");
  }
  if (!(config.ecirc_weight >= 0.0) || !std::isfinite(config.ecirc_weight)) {
    throw ConfigError("ecirc weight must be finite and non-negative");
  }
  const int m = joint.positions();
  const int v = joint.vocabulary().size();
  const auto vs = static_cast<std::size_t>(v);
  LogitTable table(m, v);
  const ContextIndex& index = table.index();

  struct Target {
    std::size_t row;
    double weight;
    std::vector<double> p;
  };
  const auto patterns = covered_patterns(m, config);
  std::vector<Target> targets;
  const Assignment empty(m);
  for (const auto& [i, mask] : patterns) {
    std::vector<int> visible_positions;
    for (int p = 0; p < m; ++p) {
      if ((mask >> p) & 1u) visible_positions.push_back(p);
    }
    for_each_completion(empty, visible_positions, v, [&](const Assignment& x) {
      const double log_px = joint.log_marginal(x);
      Target t{index.row(i, x), std::exp(log_px) / static_cast<double>(patterns.size()), std::vector<double>(vs)};
      Assignment with = x;
      for (std::size_t a = 0; a < vs; ++a) {
        with.set(i, static_cast<int>(a));
        t.p[a] = std::exp(joint.log_marginal(with) - log_px);
      }
      targets.push_back(std::move(t));
    });
  }

  // Each covered row's cross-entropy Hessian is bounded by weight / 2, so a
  // step above 2 / max weight overshoots and the loss cycles.
  double max_weight = 0.0;
  for (const auto& t : targets) max_weight = std::max(max_weight, t.weight);
  const double rate = max_weight > 0.0 ? std::min(config.learning_rate, 2.0 / max_weight) : config.learning_rate;

  const bool penalize = config.ecirc_weight > 0.0 && m >= 2;
  std::optional<SquareSpace> space;
  if (penalize) space.emplace(m, v);

  TrainingHistory history;
  history.patterns = patterns.size();
  history.learning_rate = rate;
  std::vector<double> log_q(table.data().size());
  std::vector<double> grad(table.data().size());
  for (std::size_t step = 0;; ++step) {
    std::copy(table.data().begin(), table.data().end(), log_q.begin());
    for (std::size_t r = 0; r < table.row_count(); ++r) log_softmax(std::span<double>(log_q.data() + r * vs, vs));
    std::fill(grad.begin(), grad.end(), 0.0);

    double loss = 0.0;
    for (const auto& t : targets) {
      const double* lq = log_q.data() + t.row * vs;
      double* g = grad.data() + t.row * vs;
      for (std::size_t a = 0; a < vs; ++a) {
        loss -= t.weight * t.p[a] * lq[a];
        g[a] += t.weight * (std::exp(lq[a]) - t.p[a]);
      }
    }

    double penalty = 0.0;
    if (penalize) {
      std::vector<std::uint64_t> picks;
      if (config.ecirc_samples == 0) {
        picks.resize(static_cast<std::size_t>(space->size()));
        for (std::size_t k = 0; k < picks.size(); ++k) picks[k] = k;
      } else {
        auto engine = keyed_engine(config.seed, 0xec1c, step);
        std::uniform_int_distribution<std::uint64_t> pick(0, space->size() - 1);
        picks.resize(config.ecirc_samples);
        for (auto& x : picks) x = pick(engine);
      }
      const double scale = config.ecirc_weight / static_cast<double>(picks.size());
      for (std::uint64_t k : picks) {
        const auto sq = space->at(k);
        Assignment with_i = sq.context;
        with_i.set(sq.i, sq.a);
        Assignment with_j = sq.context;
        with_j.set(sq.j, sq.b);
        const std::array<std::size_t, 4> rows{index.row(sq.i, sq.context), index.row(sq.j, with_i),
                                              index.row(sq.j, sq.context), index.row(sq.i, with_j)};
        const std::array<std::size_t, 4> tokens{static_cast<std::size_t>(sq.a), static_cast<std::size_t>(sq.b),
                                                static_cast<std::size_t>(sq.b), static_cast<std::size_t>(sq.a)};
        constexpr std::array<double, 4> sign{1.0, 1.0, -1.0, -1.0};
        std::array<double, 4> l{};
        double curl = 0.0;
        double denom = kDefaultCurlEpsilon;
        for (std::size_t n = 0; n < 4; ++n) {
          l[n] = log_q[rows[n] * vs + tokens[n]];
          curl += sign[n] * l[n];
          denom += std::abs(l[n]);
        }
        penalty += (curl / denom) * (curl / denom) / static_cast<double>(picks.size());
        for (std::size_t n = 0; n < 4; ++n) {
          // d(C^2 / D^2)/d l_n with dD/dl_n = -1 since every log term is <= 0.
          const double d_l = scale * (2.0 * curl * sign[n] / (denom * denom) + 2.0 * curl * curl / (denom * denom * denom));
          const double* lq = log_q.data() + rows[n] * vs;
          double* g = grad.data() + rows[n] * vs;
          for (std::size_t c = 0; c < vs; ++c) g[c] += d_l * ((c == tokens[n] ? 1.0 : 0.0) - std::exp(lq[c]));
        }
      }
    }

    double norm2 = 0.0;
    for (double g : grad) norm2 += g * g;
    const double total = loss + config.ecirc_weight * penalty;
    history.loss.push_back(loss);
    history.ecirc.push_back(penalty);
    history.grad_norm.push_back(std::sqrt(norm2));
    if (!std::isfinite(total) || !std::isfinite(norm2)) {
      throw TrainingFailure(fmt::format("training diverged at step {}", step), std::move(history));
    }
    if (std::sqrt(norm2) < config.grad_tolerance) {
      history.converged = true;
      break;
    }
    if (step >= config.steps) break;
    auto data = table.data();
    for (std::size_t k = 0; k < data.size(); ++k) data[k] -= rate * grad[k];
  }

  std::string id = fmt::format("trained({},gamma={:g},steps={},seed={}):{}", to_string(config.coverage),
                               config.ecirc_weight, config.steps, config.seed, joint.id());
  return TrainedTabularOracle(std::move(table), std::move(history), std::move(id));
}

}  // namespace curlgauge
