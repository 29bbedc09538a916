// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0

#include "curlgauge/pseudo_joint.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <random>

#include <fmt/format.h>

#include "curlgauge/error.hpp"
#include "curlgauge/parallel.hpp"

namespace curlgauge {

namespace {

std::size_t ipow(std::size_t base, int exp) {
  std::size_t r = 1;
  for (int k = 0; k < exp; ++k) r *= base;
  return r;
}

std::vector<int> sorted_block(const PartialContext& context) {
  std::vector<int> block = context.block;
  std::sort(block.begin(), block.end());
  return block;
}

void check_pair(const Assignment& context, int positions, int i, int j) {
  if (context.size() != positions) throw DimensionError("context does not match oracle positions");
  if (i == j) throw ContractViolation("curl needs two distinct positions");
  for (int p : {i, j}) {
    if (p < 0 || p >= positions) throw DimensionError(fmt::format("position {} out of range", p));
    if (context.is_set(p)) throw ContractViolation(fmt::format("position {} is already observed", p));
  }
}

std::array<double, 4> curl_terms(const ConditionalOracle& oracle, const Assignment& context, int i, int j,
                                 int a, int b) {
  Assignment with_i = context;
  with_i.set(i, a);
  Assignment with_j = context;
  with_j.set(j, b);
  return {oracle.log_conditional(i, a, context), oracle.log_conditional(j, b, with_i),
          oracle.log_conditional(j, b, context), oracle.log_conditional(i, a, with_j)};
}

double curl_from_terms(const std::array<double, 4>& t) { return (t[0] + t[1]) - (t[2] + t[3]); }

double normalized_from_terms(const std::array<double, 4>& t, double value, double epsilon) {
  return std::abs(value) /
         (std::abs(t[0]) + std::abs(t[1]) + std::abs(t[2]) + std::abs(t[3]) + epsilon);
}

// All conditionals needed for every (a, b) on one (i, j) square.
struct SquareTable {
  int vocab = 0;
  std::vector<double> li;          // log q(i=. | S)
  std::vector<double> lj;          // log q(j=. | S)
  std::vector<double> lj_given_i;  // [a * V + b] = log q(j=b | S, i=a)
  std::vector<double> li_given_j;  // [b * V + a] = log q(i=a | S, j=b)

  SquareTable(const ConditionalOracle& oracle, const Assignment& context, int i, int j)
      : vocab(oracle.vocabulary().size()) {
    const auto v = static_cast<std::size_t>(vocab);
    li = oracle.log_conditional(i, context);
    lj = oracle.log_conditional(j, context);
    lj_given_i.resize(v * v);
    li_given_j.resize(v * v);
    for (int a = 0; a < vocab; ++a) {
      Assignment with = context;
      with.set(i, a);
      oracle.log_conditional(j, with, std::span<double>(lj_given_i).subspan(static_cast<std::size_t>(a) * v, v));
    }
    for (int b = 0; b < vocab; ++b) {
      Assignment with = context;
      with.set(j, b);
      oracle.log_conditional(i, with, std::span<double>(li_given_j).subspan(static_cast<std::size_t>(b) * v, v));
    }
  }

  std::array<double, 4> terms(int a, int b) const {
    const auto v = static_cast<std::size_t>(vocab);
    return {li[static_cast<std::size_t>(a)], lj_given_i[static_cast<std::size_t>(a) * v + static_cast<std::size_t>(b)],
            lj[static_cast<std::size_t>(b)], li_given_j[static_cast<std::size_t>(b) * v + static_cast<std::size_t>(a)]};
  }
  double log_forward(int a, int b) const {
    const auto t = terms(a, b);
    return t[0] + t[1];
  }
  double log_backward(int a, int b) const {
    const auto t = terms(a, b);
    return t[2] + t[3];
  }
};

struct CurlRecord {
  int i, j, a, b;
  double value;
  double normalized;
};

std::vector<std::pair<int, int>> block_pairs(const std::vector<int>& block) {
  std::vector<std::pair<int, int>> pairs;
  for (std::size_t s = 0; s < block.size(); ++s)
    for (std::size_t t = s + 1; t < block.size(); ++t) pairs.emplace_back(block[s], block[t]);
  return pairs;
}

std::vector<CurlRecord> collect_curls(const ConditionalOracle& oracle, const PartialContext& context,
                                      const SamplingPlan& plan, double epsilon) {
  const int m = oracle.positions();
  const int v = oracle.vocabulary().size();
  context.validate(m, oracle.vocabulary());
  const Assignment visible = context.visible(m);
  const auto block = sorted_block(context);
  const auto pairs = block_pairs(block);
  if (pairs.empty()) throw ContractViolation("curl statistics need at least two block positions");

  std::vector<CurlRecord> out;
  switch (plan.kind) {
    case SamplingPlan::Kind::exhaustive: {
      out.reserve(pairs.size() * static_cast<std::size_t>(v * v));
      for (const auto& [i, j] : pairs) {
        const SquareTable square(oracle, visible, i, j);
        for (int a = 0; a < v; ++a) {
          for (int b = 0; b < v; ++b) {
            const auto t = square.terms(a, b);
            const double c = curl_from_terms(t);
            out.push_back({i, j, a, b, c, normalized_from_terms(t, c, epsilon)});
          }
        }
      }
      break;
    }
    case SamplingPlan::Kind::monte_carlo: {
      if (plan.samples == 0) throw ContractViolation("Monte Carlo plan needs at least one sample");
      std::mt19937_64 engine(plan.seed);
      std::uniform_int_distribution<std::size_t> pick_pair(0, pairs.size() - 1);
      std::uniform_int_distribution<int> pick_token(0, v - 1);
      out.reserve(plan.samples);
      for (std::size_t n = 0; n < plan.samples; ++n) {
        const auto [i, j] = pairs[pick_pair(engine)];
        const int a = pick_token(engine);
        const int b = pick_token(engine);
        const auto t = curl_terms(oracle, visible, i, j, a, b);
        const double c = curl_from_terms(t);
        out.push_back({i, j, a, b, c, normalized_from_terms(t, c, epsilon)});
      }
      break;
    }
    case SamplingPlan::Kind::single: {
      const auto [i, j, a, b] = plan.tuple;
      if (std::find(block.begin(), block.end(), i) == block.end() ||
          std::find(block.begin(), block.end(), j) == block.end()) {
        throw ContractViolation("single-tuple plan must name two block positions");
      }
      const auto s = curl_local(oracle, visible, i, j, a, b);
      out.push_back({i, j, a, b, s.value, curl_normalized(s, epsilon)});
      break;
    }
  }
  return out;
}

Estimate mean_of(const std::vector<CurlRecord>& records, bool exact, double (*fn)(const CurlRecord&)) {
  RunningStats stats;
  for (const auto& r : records) stats.add(fn(r));
  return stats.estimate(exact);
}

}  // namespace

void PseudoJointSpec::validate(int positions, const Vocabulary& vocab) const {
  context.validate(positions, vocab);
  if (!is_permutation_of(order, context.block)) {
    throw ContractViolation("pseudo-joint order must be a permutation of the context block");
  }
}

double pseudo_joint_log_prob(const ConditionalOracle& oracle, const PseudoJointSpec& spec,
                             const Assignment& assignment) {
  const int m = oracle.positions();
  spec.validate(m, oracle.vocabulary());
  if (assignment.size() != m) throw DimensionError("assignment does not match oracle positions");
  Assignment state = spec.context.visible(m);
  double total = 0.0;
  for (int p : spec.order) {
    if (!assignment.is_set(p)) {
      throw ContractViolation(fmt::format("assignment is missing block position {}", p));
    }
    total += oracle.log_conditional(p, assignment[p], state);
    state.set(p, assignment[p]);
  }
  return total;
}

CurlSample curl_local(const ConditionalOracle& oracle, const Assignment& context, int i, int j, int a, int b) {
  check_pair(context, oracle.positions(), i, j);
  CurlSample s;
  s.i = i;
  s.j = j;
  s.a = a;
  s.b = b;
  s.context = context;
  s.log_terms = curl_terms(oracle, context, i, j, a, b);
  s.value = curl_from_terms(s.log_terms);

  PseudoJointSpec forward;
  for (int k : context.set_positions()) forward.context.observed[k] = context[k];
  forward.context.block = {i, j};
  forward.order = {i, j};
  PseudoJointSpec backward = forward;
  backward.order = {j, i};
  Assignment ab = context;
  ab.set(i, a);
  ab.set(j, b);
  s.pseudo_joint_log_ratio =
      pseudo_joint_log_prob(oracle, forward, ab) - pseudo_joint_log_prob(oracle, backward, ab);
  s.normalized_value = curl_normalized(s);
  return s;
}

double curl_normalized(const CurlSample& sample, double epsilon) {
  if (!(epsilon > 0.0)) throw ContractViolation("normalization epsilon must be > 0");
  return normalized_from_terms(sample.log_terms, sample.value, epsilon);
}

SamplingPlan SamplingPlan::monte_carlo(std::uint64_t seed, std::size_t samples) {
  SamplingPlan p;
  p.kind = Kind::monte_carlo;
  p.seed = seed;
  p.samples = samples;
  return p;
}

SamplingPlan SamplingPlan::single(int i, int j, int a, int b) {
  SamplingPlan p;
  p.kind = Kind::single;
  p.tuple = {i, j, a, b};
  return p;
}

Estimate ecirc_abs(const ConditionalOracle& oracle, const PartialContext& context, const SamplingPlan& plan) {
  const auto records = collect_curls(oracle, context, plan, kDefaultCurlEpsilon);
  return mean_of(records, plan.kind != SamplingPlan::Kind::monte_carlo,
                 [](const CurlRecord& r) { return std::abs(r.value); });
}

Estimate ecirc_normalized(const ConditionalOracle& oracle, const PartialContext& context,
                          const SamplingPlan& plan, double epsilon) {
  if (!(epsilon > 0.0)) throw ContractViolation("normalization epsilon must be > 0");
  const auto records = collect_curls(oracle, context, plan, epsilon);
  return mean_of(records, plan.kind != SamplingPlan::Kind::monte_carlo,
                 [](const CurlRecord& r) { return r.normalized; });
}

Estimate order_swap_kl(const ConditionalOracle& oracle, const Assignment& context, int i, int j,
                       const KlMode& mode) {
  check_pair(context, oracle.positions(), i, j);
  const int v = oracle.vocabulary().size();
  if (mode.exact) {
    const SquareTable square(oracle, context, i, j);
    double kl = 0.0;
    for (int a = 0; a < v; ++a) {
      for (int b = 0; b < v; ++b) {
        const double forward = square.log_forward(a, b);
        kl += std::exp(forward) * (forward - square.log_backward(a, b));
      }
    }
    Estimate e;
    e.mean = kl;
    e.n = static_cast<std::size_t>(v * v);
    e.exact = true;
    return e;
  }
  if (mode.samples == 0) throw ContractViolation("Monte Carlo KL needs at least one sample");
  const SquareTable square(oracle, context, i, j);
  std::mt19937_64 engine(mode.seed);
  const auto v_size = static_cast<std::size_t>(v);
  RunningStats stats;
  for (std::size_t n = 0; n < mode.samples; ++n) {
    const int a = sample_from_logs(square.li, std::generate_canonical<double, 53>(engine));
    const auto row = std::span<const double>(square.lj_given_i).subspan(static_cast<std::size_t>(a) * v_size, v_size);
    const int b = sample_from_logs(row, std::generate_canonical<double, 53>(engine));
    stats.add(curl_from_terms(square.terms(a, b)));
  }
  return stats.estimate(false);
}

void SwapPath::validate() const {
  if (!is_permutation_of(start, end)) throw ContractViolation("swap path endpoints are not permutations of each other");
  Order current = start;
  for (int k : steps) apply_adjacent_swap(current, k);
  if (current != end) throw ContractViolation("applying the swap steps to start does not reach end");
}

SwapDecomposition swap_decomposition(const ConditionalOracle& oracle, const PartialContext& context,
                                     const SwapPath& path, const Assignment& assignment) {
  const int m = oracle.positions();
  context.validate(m, oracle.vocabulary());
  if (!is_permutation_of(path.start, context.block)) {
    throw ContractViolation("swap path must permute the context block");
  }
  path.validate();
  if (assignment.size() != m) throw DimensionError("assignment does not match oracle positions");
  for (int p : context.block) {
    if (!assignment.is_set(p)) throw ContractViolation(fmt::format("assignment is missing block position {}", p));
  }

  const Assignment observed = context.visible(m);
  SwapDecomposition out;
  Order current = path.start;
  for (int k : path.steps) {
    const auto slot = static_cast<std::size_t>(k);
    SwapTerm term;
    term.k = k;
    Assignment prefix_context = observed;
    for (std::size_t s = 0; s + 1 < slot; ++s) {
      term.prefix.push_back(current[s]);
      prefix_context.set(current[s], assignment[current[s]]);
    }
    const int i = current[slot - 1];
    const int j = current[slot];
    term.curl = curl_local(oracle, prefix_context, i, j, assignment[i], assignment[j]);
    out.curl_sum += term.curl.value;
    out.terms.push_back(std::move(term));
    apply_adjacent_swap(current, k);
  }

  Assignment full = observed;
  for (int p : context.block) full.set(p, assignment[p]);
  const PseudoJointSpec from{context, path.start};
  const PseudoJointSpec to{context, path.end};
  out.log_ratio = pseudo_joint_log_prob(oracle, from, full) - pseudo_joint_log_prob(oracle, to, full);
  out.residual = out.log_ratio - out.curl_sum;
  return out;
}

BlockConditionals::BlockConditionals(const ConditionalOracle& oracle, const PartialContext& context)
    : block_(sorted_block(context)), vocab_(oracle.vocabulary().size()) {
  const int m = oracle.positions();
  context.validate(m, oracle.vocabulary());
  base_ = context.visible(m);
  const int n = static_cast<int>(block_.size());
  const auto v = static_cast<std::size_t>(vocab_);
  const auto stride = static_cast<std::size_t>(n) * v;
  table_.resize(std::size_t{1} << n);
  parallel_for(table_.size(), [&](std::size_t mask_index) {
    const auto mask = static_cast<unsigned>(mask_index);
    std::vector<int> subset;
    for (int s = 0; s < n; ++s)
      if (mask & (1u << s)) subset.push_back(block_[static_cast<std::size_t>(s)]);
    auto& table = table_[mask_index];
    table.assign(ipow(v, static_cast<int>(subset.size())) * stride, 0.0);
    std::size_t idx = 0;
    for_each_completion(base_, subset, vocab_, [&](const Assignment& visible) {
      for (int s = 0; s < n; ++s) {
        if (mask & (1u << s)) continue;
        oracle.log_conditional(block_[static_cast<std::size_t>(s)], visible,
                               std::span<double>(table).subspan(idx * stride + static_cast<std::size_t>(s) * v, v));
      }
      ++idx;
    });
  });
}

std::size_t BlockConditionals::subset_index(unsigned mask, const Assignment& tokens) const {
  std::size_t idx = 0;
  for (std::size_t s = 0; s < block_.size(); ++s) {
    if (mask & (1u << s)) idx = idx * static_cast<std::size_t>(vocab_) + static_cast<std::size_t>(tokens[block_[s]]);
  }
  return idx;
}

std::span<const double> BlockConditionals::conditional(unsigned mask, const Assignment& tokens, int slot) const {
  if (mask & (1u << slot)) throw ContractViolation("slot already conditioned on");
  const auto v = static_cast<std::size_t>(vocab_);
  const auto stride = block_.size() * v;
  return std::span<const double>(table_[mask]).subspan(
      subset_index(mask, tokens) * stride + static_cast<std::size_t>(slot) * v, v);
}

ConsistencyReport order_consistency_check(const ConditionalOracle& oracle, const PartialContext& context,
                                          double tolerance) {
  const int m = oracle.positions();
  const int v = oracle.vocabulary().size();
  context.validate(m, oracle.vocabulary());
  const int n = static_cast<int>(context.block.size());
  if (n > kMaxConsistencyBlock) {
    throw CapExceeded(fmt::format("consistency check enumerates {}! orders; block size is capped at {}", n,
                                  kMaxConsistencyBlock));
  }
  const std::size_t assignments = ipow(static_cast<std::size_t>(v), n);
  if (assignments > kMaxConsistencyAssignments) {
    throw CapExceeded(fmt::format("consistency check would enumerate {} block assignments (cap {})", assignments,
                                  kMaxConsistencyAssignments));
  }

  const BlockConditionals cache(oracle, context);
  const auto& block = cache.block();
  std::vector<int> slots(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) slots[static_cast<std::size_t>(s)] = s;
  const auto orders = all_orders(slots);

  ConsistencyReport report;
  report.tolerance = tolerance;
  report.orders_checked = orders.size();

  // (a) every order against every other, per block assignment.
  std::vector<Assignment> states;
  states.reserve(assignments);
  for_each_completion(cache.base(), block, v, [&](const Assignment& x) { states.push_back(x); });
  struct GapResult {
    double gap = 0.0;
    std::size_t hi = 0;
    std::size_t lo = 0;
  };
  std::vector<GapResult> gaps(states.size());
  parallel_for(states.size(), [&](std::size_t k) {
    const Assignment& x = states[k];
    double best = -std::numeric_limits<double>::infinity();
    double worst = std::numeric_limits<double>::infinity();
    GapResult r;
    for (std::size_t o = 0; o < orders.size(); ++o) {
      double lq = 0.0;
      unsigned mask = 0;
      for (int s : orders[o]) {
        lq += cache.conditional(mask, x, s)[static_cast<std::size_t>(x[block[static_cast<std::size_t>(s)]])];
        mask |= 1u << s;
      }
      if (lq > best) {
        best = lq;
        r.hi = o;
      }
      if (lq < worst) {
        worst = lq;
        r.lo = o;
      }
    }
    r.gap = best - worst;
    gaps[k] = r;
  });
  auto to_positions = [&](const Order& slot_order) {
    Order out;
    for (int s : slot_order) out.push_back(block[static_cast<std::size_t>(s)]);
    return out;
  };
  for (std::size_t k = 0; k < states.size(); ++k) {
    report.max_gap = std::max(report.max_gap, gaps[k].gap);
    if (!report.gap_witness && gaps[k].gap >= tolerance) {
      report.gap_witness = OrderGapWitness{states[k], to_positions(orders[gaps[k].hi]),
                                           to_positions(orders[gaps[k].lo]), gaps[k].gap};
    }
  }

  // (b) every reachable elementary square: subsets by size, then
  // lexicographically; tokens lexicographically; pairs; token pairs.
  std::vector<std::vector<int>> subsets;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    std::vector<int> s;
    for (int k = 0; k < n; ++k)
      if (mask & (1u << k)) s.push_back(k);
    subsets.push_back(std::move(s));
  }
  std::stable_sort(subsets.begin(), subsets.end(), [](const auto& x, const auto& y) {
    return x.size() != y.size() ? x.size() < y.size() : x < y;
  });
  std::optional<std::tuple<Assignment, int, int, int, int>> first_square;
  for (const auto& subset : subsets) {
    unsigned mask = 0;
    std::vector<int> positions;
    for (int s : subset) {
      mask |= 1u << s;
      positions.push_back(block[static_cast<std::size_t>(s)]);
    }
    for_each_completion(cache.base(), positions, v, [&](const Assignment& x) {
      for (int si = 0; si < n; ++si) {
        if (mask & (1u << si)) continue;
        for (int sj = si + 1; sj < n; ++sj) {
          if (mask & (1u << sj)) continue;
          const int i = block[static_cast<std::size_t>(si)];
          const int j = block[static_cast<std::size_t>(sj)];
          const auto li = cache.conditional(mask, x, si);
          const auto lj = cache.conditional(mask, x, sj);
          for (int a = 0; a < v; ++a) {
            Assignment xa = x;
            xa.set(i, a);
            const auto lj_a = cache.conditional(mask | (1u << si), xa, sj);
            for (int b = 0; b < v; ++b) {
              Assignment xb = x;
              xb.set(j, b);
              const auto li_b = cache.conditional(mask | (1u << sj), xb, si);
              const double c = (li[static_cast<std::size_t>(a)] + lj_a[static_cast<std::size_t>(b)]) -
                               (lj[static_cast<std::size_t>(b)] + li_b[static_cast<std::size_t>(a)]);
              ++report.squares_checked;
              report.max_curl = std::max(report.max_curl, std::abs(c));
              if (!first_square && std::abs(c) >= tolerance) first_square.emplace(x, i, j, a, b);
            }
          }
        }
      }
    });
  }
  if (first_square) {
    const auto& [x, i, j, a, b] = *first_square;
    report.witness = curl_local(oracle, x, i, j, a, b);
  }

  report.permutation_verdict = report.max_gap < tolerance;
  report.square_verdict = report.max_curl < tolerance;
  report.consistent = report.permutation_verdict && report.square_verdict;
  return report;
}

CurlScanReport curl_scan(const ConditionalOracle& oracle, const PartialContext& context, const SamplingPlan& plan,
                         std::size_t witness_count, std::size_t histogram_bins) {
  const auto records = collect_curls(oracle, context, plan, kDefaultCurlEpsilon);
  const bool exact = plan.kind != SamplingPlan::Kind::monte_carlo;
  CurlScanReport report;
  report.model_id = oracle.id();
  report.context = context;
  report.plan = plan;
  report.sampled_pairs = !exact;
  report.ecirc_abs = mean_of(records, exact, [](const CurlRecord& r) { return std::abs(r.value); });
  report.ecirc_norm = mean_of(records, exact, [](const CurlRecord& r) { return r.normalized; });
  for (const auto& r : records) report.max_curl = std::max(report.max_curl, std::abs(r.value));

  const int m = oracle.positions();
  const Assignment visible = context.visible(m);
  for (const auto& [i, j] : block_pairs(sorted_block(context))) {
    const KlMode mode = exact ? KlMode::exact_mode()
                              : KlMode::monte_carlo(plan.seed ^ (static_cast<std::uint64_t>(i) << 32 | static_cast<std::uint64_t>(j)),
                                                    plan.samples);
    report.order_swap_kl.push_back({i, j, order_swap_kl(oracle, visible, i, j, mode)});
  }

  std::vector<std::size_t> idx(records.size());
  for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
    return std::abs(records[x].value) > std::abs(records[y].value);
  });
  for (std::size_t k = 0; k < std::min(witness_count, idx.size()); ++k) {
    const auto& r = records[idx[k]];
    report.witnesses.push_back(curl_local(oracle, visible, r.i, r.j, r.a, r.b));
  }

  report.histogram_max = report.max_curl;
  report.histogram.assign(histogram_bins, 0);
  if (histogram_bins > 0) {
    for (const auto& r : records) {
      std::size_t bin = 0;
      if (report.histogram_max > 0.0) {
        bin = static_cast<std::size_t>(std::abs(r.value) / report.histogram_max * static_cast<double>(histogram_bins));
        bin = std::min(bin, histogram_bins - 1);
      }
      ++report.histogram[bin];
    }
  }
  return report;
}

}  // namespace curlgauge
