// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <random>

#include <fmt/format.h>

#include "curlgauge/dependence.hpp"
#include "curlgauge/error.hpp"
#include "curlgauge/numeric.hpp"
#include "curlgauge/order_error.hpp"
#include "curlgauge/report.hpp"

namespace curlgauge {

json to_json(const Estimate& e) {
  return {{"mean", e.mean}, {"std_error", e.std_error}, {"n", e.n}, {"exact", e.exact}};
}

json to_json(const CurlSample& s) {
  json visible = json::object();
  for (int p = 0; p < s.context.size(); ++p) {
    if (s.context.is_set(p)) visible[std::to_string(p)] = s.context[p];
  }
  return {{"i", s.i},
          {"j", s.j},
          {"a", s.a},
          {"b", s.b},
          {"context", visible},
          {"log_terms", s.log_terms},
          {"curl", s.value},
          {"pseudo_joint_log_ratio", s.pseudo_joint_log_ratio},
          {"normalized", s.normalized_value}};
}

namespace {

std::string order_label(const Order& order) {
  std::string s;
  for (std::size_t k = 0; k < order.size(); ++k) s += (k ? " " : "") + std::to_string(order[k]);
  return s;
}

std::string assignment_label(const Assignment& x, const std::vector<int>& positions) {
  std::string s;
  for (std::size_t k = 0; k < positions.size(); ++k) s += (k ? " " : "") + std::to_string(x[positions[k]]);
  return s;
}

struct BuiltModel {
  std::shared_ptr<const TabularJointModel> joint;
  std::shared_ptr<const ConditionalOracle> oracle;
  std::optional<std::pair<double, std::uint64_t>> perturbation;
};

BuiltModel build_model(const ExperimentConfig& c) {
  BuiltModel out;
  std::optional<LogitTable> file_logits;
  if (c.model.file) {
    ModelFile f = read_model_file(*c.model.file);
    out.joint = f.joint;
    out.perturbation = f.perturbation;
    file_logits = std::move(f.logit_table);
  } else if (c.model.synthetic) {
    out.joint = std::make_shared<const TabularJointModel>(generate_joint(*c.model.synthetic));
  } else {
    throw ConfigError("config names no model (set model.file or model.synthetic)");
  }

  std::string kind = c.model.oracle;
  if (kind == "auto") kind = file_logits ? "logit-table" : out.perturbation ? "perturbed" : "bayes";
  auto bayes = std::make_shared<const BayesOracle>(out.joint);
  if (kind == "bayes") {
    out.oracle = bayes;
    out.perturbation.reset();
  } else if (kind == "perturbed") {
    if (c.model.oracle == "perturbed") out.perturbation = std::make_pair(c.model.delta, c.model.perturbation_seed);
    out.oracle = std::make_shared<const PerturbedConditionalModel>(out.joint, out.perturbation->first,
                                                                   out.perturbation->second);
  } else if (kind == "logit-table") {
    if (!file_logits) throw ConfigError("oracle 'logit-table' needs a model file with a logit_table section");
    out.oracle = std::make_shared<const LogitTableOracle>(std::move(*file_logits), "logit-table:" + out.joint->id());
  } else {
    out.oracle = std::make_shared<const TrainedTabularOracle>(train_tabular(*out.joint, c.train));
  }
  return out;
}

std::vector<PartialContext> resolve_contexts(const ExperimentConfig& c, const TabularJointModel& joint) {
  const int m = joint.positions();
  std::vector<PartialContext> out;
  if (c.contexts.sampled) {
    const int size = c.contexts.block_size == 0 ? m : c.contexts.block_size;
    if (size < 1 || size > m) throw ConfigError(fmt::format("block_size {} outside [1, {}]", size, m));
    for (std::size_t k = 0; k < c.contexts.count; ++k) {
      auto engine = keyed_engine(c.contexts.seed, 0xc0ffee, k);
      std::vector<int> positions(static_cast<std::size_t>(m));
      for (int p = 0; p < m; ++p) positions[static_cast<std::size_t>(p)] = p;
      std::shuffle(positions.begin(), positions.end(), engine);
      // Observed tokens come from one draw of the joint.
      const double u = std::generate_canonical<double, 53>(engine);
      const Assignment x = joint.state(static_cast<std::size_t>(sample_from_logs(joint.log_mass(), u)));
      PartialContext ctx;
      ctx.block.assign(positions.begin(), positions.begin() + size);
      std::sort(ctx.block.begin(), ctx.block.end());
      for (auto it = positions.begin() + size; it != positions.end(); ++it) ctx.observed[*it] = x[*it];
      out.push_back(std::move(ctx));
    }
  } else if (!c.contexts.explicit_contexts.empty()) {
    out = c.contexts.explicit_contexts;
  } else {
    PartialContext ctx;
    for (int p = 0; p < m; ++p) ctx.block.push_back(p);
    out.push_back(std::move(ctx));
  }
  for (const auto& ctx : out) ctx.validate(m, joint.vocabulary());
  return out;
}

json curl_scan_section(const ConditionalOracle& oracle, const std::vector<PartialContext>& contexts,
                       const CurlScanParams& p) {
  json reports = json::array();
  json histogram = json::array();
  json kl_rows = json::array();
  json summary = json::array();
  for (std::size_t c = 0; c < contexts.size(); ++c) {
    const SamplingPlan plan = p.monte_carlo ? SamplingPlan::monte_carlo(p.seed, p.samples) : SamplingPlan::exhaustive();
    const CurlScanReport r = curl_scan(oracle, contexts[c], plan, p.witnesses, p.bins);
    json pairs = json::array();
    for (const auto& kl : r.order_swap_kl) {
      pairs.push_back({{"i", kl.i}, {"j", kl.j}, {"kl", to_json(kl.kl)}});
      kl_rows.push_back({{"context", c}, {"i", kl.i}, {"j", kl.j}, {"kl", kl.kl.mean}, {"std_error", kl.kl.std_error},
                         {"exact", kl.kl.exact}});
    }
    json witnesses = json::array();
    for (const auto& w : r.witnesses) witnesses.push_back(to_json(w));
    const double width = r.histogram.empty() ? 0.0 : r.histogram_max / static_cast<double>(r.histogram.size());
    for (std::size_t b = 0; b < r.histogram.size(); ++b) {
      histogram.push_back({{"context", c},
                           {"bin_lo", width * static_cast<double>(b)},
                           {"bin_hi", width * static_cast<double>(b + 1)},
                           {"count", r.histogram[b]}});
    }
    summary.push_back({{"context", c},
                       {"ecirc_abs", r.ecirc_abs.mean},
                       {"ecirc_abs_se", r.ecirc_abs.std_error},
                       {"ecirc_norm", r.ecirc_norm.mean},
                       {"ecirc_norm_se", r.ecirc_norm.std_error},
                       {"max_curl", r.max_curl},
                       {"n", r.ecirc_abs.n}});
    reports.push_back({{"model_id", r.model_id},
                       {"context", to_json(r.context)},
                       {"stats",
                        {{"ecirc_abs", to_json(r.ecirc_abs)},
                         {"ecirc_norm", to_json(r.ecirc_norm)},
                         {"max_curl", r.max_curl},
                         {"order_swap_kl", pairs}}},
                       {"witnesses", witnesses},
                       {"sampled_pairs", r.sampled_pairs},
                       {"seed", plan.seed},
                       {"n", r.ecirc_abs.n}});
  }
  return {{"reports", reports}, {"curl_summary", summary}, {"curl_histogram", histogram}, {"order_swap_kl", kl_rows}};
}

json order_gap_section(const ConditionalOracle& oracle, const TabularJointModel& joint,
                       const std::vector<PartialContext>& contexts, const OrderGapParams& p) {
  json rows = json::array();
  json summaries = json::array();
  for (std::size_t c = 0; c < contexts.size(); ++c) {
    const auto& ctx = contexts[c];
    Order start = p.start.value_or(ctx.block);
    if (!p.start) std::sort(start.begin(), start.end());
    Order end = p.end.value_or(start);
    if (!p.end) std::reverse(end.begin(), end.end());
    if (!is_permutation_of(start, ctx.block) || !is_permutation_of(end, ctx.block)) {
      throw ConfigError(fmt::format("order_gap orders must permute the block of context {}", c));
    }
    auto engine = keyed_engine(p.seed, 0x9a9, c);
    SwapPath path{start, end, random_swap_path(start, end, p.detour, engine)};
    std::size_t states = 1;
    for (std::size_t k = 0; k < ctx.block.size(); ++k) states *= static_cast<std::size_t>(joint.vocabulary().size());
    if (states > kMaxConsistencyAssignments) {
      throw CapExceeded(fmt::format("order gap over {} block assignments (cap {})", states, kMaxConsistencyAssignments));
    }
    double max_residual = 0.0;
    double max_gap = 0.0;
    const std::vector<int> block_sorted = [&] {
      auto b = ctx.block;
      std::sort(b.begin(), b.end());
      return b;
    }();
    for_each_completion(ctx.visible(joint.positions()), block_sorted, joint.vocabulary().size(), [&](const Assignment& x) {
      const auto d = swap_decomposition(oracle, ctx, path, x);
      max_residual = std::max(max_residual, std::abs(d.residual));
      max_gap = std::max(max_gap, std::abs(d.log_ratio));
      rows.push_back({{"context", c},
                      {"assignment", assignment_label(x, block_sorted)},
                      {"log_ratio", d.log_ratio},
                      {"curl_sum", d.curl_sum},
                      {"residual", d.residual}});
    });
    summaries.push_back({{"context", to_json(ctx)},
                         {"start", start},
                         {"end", end},
                         {"path", path.steps},
                         {"max_abs_log_ratio", max_gap},
                         {"max_abs_residual", max_residual}});
  }
  return {{"summaries", summaries}, {"order_gap", rows}};
}

json tc_section(const ConditionalOracle& oracle, const TabularJointModel& joint,
                const std::vector<PartialContext>& contexts) {
  json rows = json::array();
  json cmi_rows = json::array();
  for (std::size_t c = 0; c < contexts.size(); ++c) {
    const auto r = dependence_report(oracle, joint, contexts[c]);
    rows.push_back({{"context", c},
                    {"tc", r.tc},
                    {"sum_marginal_entropies", r.sum_marginal_entropies},
                    {"joint_entropy", r.joint_entropy},
                    {"independent_parallel_kl", r.independent_parallel_kl},
                    {"sum_pairwise_cmi", r.sum_pairwise_cmi},
                    {"cmi_proxy_gap", r.cmi_proxy_gap}});
    for (const auto& [pair, value] : r.pairwise_cmi) {
      cmi_rows.push_back({{"context", c}, {"i", pair.first}, {"j", pair.second}, {"cmi", value}});
    }
  }
  json ctx = json::array();
  for (const auto& c : contexts) ctx.push_back(to_json(c));
  return {{"contexts", ctx}, {"dependence", rows}, {"pairwise_cmi", cmi_rows}};
}

json order_error_section(const ConditionalOracle& oracle, const TabularJointModel& joint,
                         const std::vector<PartialContext>& contexts, const std::vector<Order>& candidates) {
  json ranking = json::array();
  json steps = json::array();
  json strata = json::array();
  for (std::size_t c = 0; c < contexts.size(); ++c) {
    std::vector<Order> orders = candidates;
    if (orders.empty()) {
      if (contexts[c].block.size() > 5) {
        throw CapExceeded("ranking every order needs |B| <= 5; list candidate orders explicitly");
      }
      orders = all_orders(contexts[c].block);
    }
    const auto ranked = rank_orders(oracle, joint, contexts[c], orders);
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      const auto& p = ranked[r];
      ranking.push_back({{"context", c},
                         {"rank", r + 1},
                         {"order", order_label(p.order)},
                         {"cross_entropy", p.cross_entropy},
                         {"conditional_entropy", p.conditional_entropy},
                         {"kl_total", p.kl_total}});
      for (std::size_t m = 0; m < p.per_step_kl.size(); ++m) {
        steps.push_back({{"context", c}, {"order", order_label(p.order)}, {"step", m}, {"kl", p.per_step_kl[m]}});
      }
    }
    for (const auto& [s, st] : stratify_contexts(ranked)) {
      strata.push_back({{"context", c},
                        {"stratum", to_string(s)},
                        {"count", st.count},
                        {"weight", st.weight},
                        {"mean_kl", st.mean_kl}});
    }
  }
  return {{"order_ranking", ranking}, {"per_step_kl", steps}, {"order_strata", strata}};
}

json commutator_section(const ConditionalOracle& oracle, const std::vector<PartialContext>& contexts,
                        const UpdateOperator& op, std::uint64_t seed) {
  json rows = json::array();
  json conflicts = json::array();
  for (std::size_t c = 0; c < contexts.size(); ++c) {
    const DecodeState state = DecodeState::start(contexts[c], oracle.positions(), seed);
    if (contexts[c].block.size() < 2) throw ConfigError(fmt::format("context {} has fewer than two block positions", c));
    const auto conflict = conflict_score(oracle, state, op, state.unresolved());
    for (const auto& [pair, value] : conflict.pairs) {
      rows.push_back({{"context", c}, {"i", pair.first}, {"j", pair.second}, {"value", value}});
    }
    conflicts.push_back({{"context", c},
                         {"conflict", conflict.value},
                         {"excluded_pairs", conflict.excluded_pairs},
                         {"degenerate", conflict.degenerate}});
  }
  return {{"operator", op.name()}, {"divergence", "sqrt-js"}, {"conflict", conflicts}, {"commutator", rows}};
}

json stress_section(const ConditionalOracle& oracle, const TabularJointModel& joint,
                    const std::vector<PartialContext>& contexts, const StressParams& p) {
  StressConfig cfg;
  cfg.widths = p.widths;
  cfg.schedulers = p.schedulers;
  cfg.op = p.op;
  cfg.runs = p.runs;
  cfg.seed = p.seed;
  const auto report = stress_test(oracle, joint, contexts, cfg);
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"context", r.context},
                    {"scheduler", r.scheduler},
                    {"width", r.width},
                    {"nll", r.nll},
                    {"degradation", r.degradation},
                    {"ecirc_abs", r.ecirc_abs},
                    {"tc", r.tc},
                    {"mean_eps", r.mean_eps},
                    {"conflict", r.conflict}});
  }
  json rho = json::array();
  for (const auto& [name, value] : report.spearman) {
    rho.push_back({{"predictor", name}, {"rho", std::isfinite(value) ? json(value) : json(nullptr)}});
  }
  return {{"operator", p.op.name()}, {"runs", p.runs}, {"stress", rows}, {"stress_spearman", rho}};
}

json consistency_section(const ConditionalOracle& oracle, const std::vector<PartialContext>& contexts, double tol) {
  json rows = json::array();
  json details = json::array();
  for (std::size_t c = 0; c < contexts.size(); ++c) {
    const auto r = order_consistency_check(oracle, contexts[c], tol);
    rows.push_back({{"context", c},
                    {"consistent", r.consistent},
                    {"max_gap", r.max_gap},
                    {"max_curl", r.max_curl},
                    {"permutation_verdict", r.permutation_verdict},
                    {"square_verdict", r.square_verdict},
                    {"orders_checked", r.orders_checked},
                    {"squares_checked", r.squares_checked}});
    json d = {{"context", to_json(contexts[c])}, {"consistent", r.consistent}, {"tolerance", r.tolerance}};
    if (r.witness) d["witness"] = to_json(*r.witness);
    if (r.gap_witness) {
      d["gap_witness"] = {{"first", r.gap_witness->first},
                          {"second", r.gap_witness->second},
                          {"gap", r.gap_witness->gap},
                          {"assignment", assignment_label(r.gap_witness->assignment, contexts[c].block)}};
    }
    details.push_back(std::move(d));
  }
  return {{"details", details}, {"consistency", rows}};
}

json history_rows(const TrainingHistory& h) {
  json rows = json::array();
  for (std::size_t s = 0; s < h.loss.size(); ++s) {
    rows.push_back({{"step", s}, {"loss", h.loss[s]}, {"ecirc", h.ecirc[s]}, {"grad_norm", h.grad_norm[s]}});
  }
  return rows;
}

}  // namespace

json run_experiment(const std::string& command, const ExperimentConfig& config) {
  const auto started = std::chrono::system_clock::now();
  const auto t0 = std::chrono::steady_clock::now();

  json report = {{"tool_version", kToolVersion},
                 {"command", command},
                 {"config_hash", fmt::format("{:016x}", config_hash(config))},
                 {"seed", config.seed},
                 {"config", config_to_json(config)}};
  json sections = json::object();
  json artifacts = json::object();

  if (command == "synth-gen") {
    if (!config.model.synthetic) throw ConfigError("synth-gen needs model.synthetic");
    const auto joint = generate_joint(*config.model.synthetic);
    PartialContext all;
    for (int p = 0; p < joint.positions(); ++p) all.block.push_back(p);
    json rows = json::array();
    for (std::size_t s = 0; s < joint.state_count(); ++s) {
      rows.push_back({{"state", assignment_label(joint.state(s), all.block)}, {"log_mass", joint.log_mass()[s]}});
    }
    sections["synth_gen"] = {{"model_id", joint.id()}, {"full_block_tc", total_correlation(joint, all)}, {"joint", rows}};
    artifacts["model.json"] = model_file_to_json(joint, std::nullopt, nullptr);
  } else if (command == "train") {
    BuiltModel base = build_model([&] {
      ExperimentConfig c = config;
      c.model.oracle = "bayes";
      return c;
    }());
    const TrainedTabularOracle oracle = train_tabular(*base.joint, config.train);
    const auto& h = oracle.history();
    const BayesOracle bayes(base.joint);
    double max_kl = 0.0;
    const LogitTable& table = oracle.table();
    for (std::size_t r = 0; r < table.row_count(); ++r) {
      const auto [i, visible] = table.index().decode(r);
      const auto q = oracle.log_conditional(i, visible);
      const auto p = bayes.log_conditional(i, visible);
      max_kl = std::max(max_kl, kl_from_logs(p, q));
    }
    json summary = {{"model_id", oracle.id()},
                    {"patterns", h.patterns},
                    {"steps_run", h.loss.empty() ? 0 : h.loss.size() - 1},
                    {"converged", h.converged},
                    {"final_loss", h.loss.back()},
                    {"final_grad_norm", h.grad_norm.back()},
                    {"effective_learning_rate", h.learning_rate},
                    {"max_kl_to_bayes", max_kl}};
    if (base.joint->positions() >= 2) {
      summary["ecirc_abs_all"] = to_json(mean_ecirc_abs(oracle, SquareFilter::all));
      summary["ecirc_abs_random_mask"] = to_json(mean_ecirc_abs(oracle, SquareFilter::random_mask));
      summary["ecirc_penalty"] = to_json(ecirc_penalty(oracle, SamplingPlan::exhaustive()));
    }
    sections["train"] = {{"summary", summary}, {"training_history", history_rows(h)}};
    json model = model_file_to_json(*base.joint, std::nullopt, &table);
    model["logit_table"]["history"] = {{"loss", h.loss}, {"ecirc", h.ecirc}, {"grad_norm", h.grad_norm}};
    artifacts["trained_model.json"] = model;
  } else {
    const BuiltModel model = build_model(config);
    const auto contexts = resolve_contexts(config, *model.joint);
    report["model_id"] = model.oracle->id();
    if (command == "curl-scan") {
      sections["curl_scan"] = curl_scan_section(*model.oracle, contexts, config.curl_scan);
    } else if (command == "order-gap") {
      sections["order_gap"] = order_gap_section(*model.oracle, *model.joint, contexts, config.order_gap);
    } else if (command == "tc") {
      sections["tc"] = tc_section(*model.oracle, *model.joint, contexts);
    } else if (command == "order-error") {
      sections["order_error"] = order_error_section(*model.oracle, *model.joint, contexts, config.order_candidates);
    } else if (command == "commutator") {
      sections["commutator"] = commutator_section(*model.oracle, contexts, config.commutator_op, config.seed);
    } else if (command == "stress") {
      sections["stress"] = stress_section(*model.oracle, *model.joint, contexts, config.stress);
    } else if (command == "consistency") {
      sections["consistency"] = consistency_section(*model.oracle, contexts, config.consistency_tolerance);
    } else {
      throw ConfigError(fmt::format("unknown command '{}'", command));
    }
  }

  report["sections"] = std::move(sections);
  if (!artifacts.empty()) report["artifacts"] = std::move(artifacts);
  const std::time_t start_time = std::chrono::system_clock::to_time_t(started);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&start_time));
  report["metadata"] = {
      {"started_at", stamp},
      {"wall_clock_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
  return report;
}

json numeric_content(const json& report) {
  json copy = report;
  copy.erase("metadata");
  return copy;
}

}  // namespace curlgauge
