// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string_view>

#include <fmt/format.h>

#include "curlgauge/error.hpp"
#include "curlgauge/numeric.hpp"
#include "curlgauge/report.hpp"

namespace curlgauge {

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!j.is_object()) throw ConfigError(fmt::format("{} must be a JSON object", where));
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError(fmt::format("unknown field '{}' in {}", key, where));
    }
  }
}

template <typename T>
T field(const json& j, const char* key, T fallback, std::string_view where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(fmt::format("field '{}' in {} has the wrong type", key, where));
  }
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* key, std::string_view where) {
  if (!j.contains(key)) return std::nullopt;
  return field<T>(j, key, T{}, where);
}

UpdateOperator parse_operator(const json& j, std::string_view where) {
  check_keys(j, {"kind", "tau"}, where);
  const auto kind = field<std::string>(j, "kind", "argmax", where);
  if (kind == "argmax") return UpdateOperator::argmax();
  if (kind == "sample") return UpdateOperator::sample();
  if (kind == "threshold") return UpdateOperator::threshold(field<double>(j, "tau", 0.9, where));
  throw ConfigError(fmt::format("unknown operator kind '{}' in {}", kind, where));
}

json operator_to_json(const UpdateOperator& op) {
  switch (op.kind) {
    case UpdateOperator::Kind::argmax:
      return {{"kind", "argmax"}};
    case UpdateOperator::Kind::sample:
      return {{"kind", "sample"}};
    case UpdateOperator::Kind::threshold:
      return {{"kind", "threshold"}, {"tau", op.tau}};
  }
  return {};
}

SchedulerSpec parse_scheduler(const json& j, std::uint64_t default_seed) {
  constexpr std::string_view where = "stress.schedulers[]";
  check_keys(j, {"kind", "seed", "lambda", "search"}, where);
  const auto kind = field<std::string>(j, "kind", "left-to-right", where);
  if (kind == "left-to-right") return SchedulerSpec::left_to_right();
  if (kind == "random") return SchedulerSpec::random(field<std::uint64_t>(j, "seed", default_seed, where));
  if (kind == "confidence") return SchedulerSpec::confidence();
  if (kind == "conflict-aware") {
    const auto lambda = field<std::vector<double>>(j, "lambda", {1.0, 1.0, 1.0}, where);
    if (lambda.size() != 3) throw ConfigError("conflict-aware lambda needs three weights");
    const auto search = field<std::string>(j, "search", "contiguous", where);
    if (search != "contiguous" && search != "subsets") throw ConfigError(fmt::format("unknown search '{}'", search));
    return SchedulerSpec::conflict_aware(lambda[0], lambda[1], lambda[2],
                                         search == "subsets" ? SchedulerSpec::Search::subsets
                                                             : SchedulerSpec::Search::contiguous);
  }
  throw ConfigError(fmt::format("unknown scheduler kind '{}'", kind));
}

json scheduler_to_json(const SchedulerSpec& s) {
  switch (s.kind) {
    case SchedulerSpec::Kind::left_to_right:
      return {{"kind", "left-to-right"}};
    case SchedulerSpec::Kind::random:
      return {{"kind", "random"}, {"seed", s.seed}};
    case SchedulerSpec::Kind::confidence:
      return {{"kind", "confidence"}};
    case SchedulerSpec::Kind::conflict_aware:
      return {{"kind", "conflict-aware"},
              {"lambda", {s.lambda_confidence, s.lambda_conflict, s.lambda_dependence}},
              {"search", s.search == SchedulerSpec::Search::subsets ? "subsets" : "contiguous"}};
  }
  return {};
}

PartialContext parse_context(const json& j) {
  constexpr std::string_view where = "contexts.explicit[]";
  check_keys(j, {"observed", "block", "time"}, where);
  PartialContext ctx;
  if (j.contains("observed")) {
    const json& obs = j.at("observed");
    if (!obs.is_object()) throw ConfigError("observed must map positions to tokens");
    for (const auto& [key, value] : obs.items()) {
      int pos = 0;
      try {
        std::size_t used = 0;
        pos = std::stoi(key, &used);
        if (used != key.size()) throw std::invalid_argument(key);
      } catch (const std::exception&) {
        throw ConfigError(fmt::format("observed key '{}' is not a position", key));
      }
      if (!value.is_number_integer()) throw ConfigError("observed tokens must be integers");
      ctx.observed[pos] = value.get<int>();
    }
  }
  ctx.block = field<std::vector<int>>(j, "block", {}, where);
  ctx.time = field<double>(j, "time", 0.0, where);
  if (ctx.time < 0.0) throw ConfigError("context time must be non-negative");
  return ctx;
}

SyntheticTaskSpec parse_synthetic(const json& j, std::uint64_t default_seed) {
  constexpr std::string_view where = "model.synthetic";
  check_keys(j, {"family", "positions", "vocab_size", "seed", "beta", "level", "components", "table"}, where);
  SyntheticTaskSpec s;
  const auto family = field<std::string>(j, "family", "chain", where);
  if (family == "chain") {
    s.family = SyntheticTaskSpec::Family::chain;
  } else if (family == "exchangeable") {
    s.family = SyntheticTaskSpec::Family::exchangeable;
  } else if (family == "tc-ladder") {
    s.family = SyntheticTaskSpec::Family::tc_ladder;
  } else if (family == "custom-table") {
    s.family = SyntheticTaskSpec::Family::custom_table;
  } else {
    throw ConfigError(fmt::format("unknown synthetic family '{}'", family));
  }
  s.positions = field<int>(j, "positions", s.positions, where);
  s.vocab_size = field<int>(j, "vocab_size", s.vocab_size, where);
  s.seed = field<std::uint64_t>(j, "seed", default_seed, where);
  s.beta = field<double>(j, "beta", s.beta, where);
  s.level = field<int>(j, "level", s.level, where);
  s.components = field<int>(j, "components", s.components, where);
  s.table = field<std::vector<double>>(j, "table", {}, where);
  return s;
}

json synthetic_to_json(const SyntheticTaskSpec& s) {
  json j = {{"family", to_string(s.family)}, {"positions", s.positions}, {"vocab_size", s.vocab_size},
            {"seed", s.seed}, {"beta", s.beta}, {"level", s.level}, {"components", s.components}};
  if (!s.table.empty()) j["table"] = s.table;
  return j;
}

TrainConfig parse_train(const json& j, std::uint64_t default_seed) {
  constexpr std::string_view where = "train";
  check_keys(j, {"coverage", "fraction", "steps", "learning_rate", "ecirc_weight", "ecirc_samples", "seed",
                 "grad_tolerance"},
             where);
  TrainConfig t;
  const auto coverage = field<std::string>(j, "coverage", "all-masks", where);
  if (coverage == "all-masks") {
    t.coverage = TrainConfig::Coverage::all_masks;
  } else if (coverage == "prefix-only") {
    t.coverage = TrainConfig::Coverage::prefix_only;
  } else if (coverage == "fraction") {
    t.coverage = TrainConfig::Coverage::fraction;
  } else {
    throw ConfigError(fmt::format("unknown coverage '{}'", coverage));
  }
  t.fraction = field<double>(j, "fraction", t.fraction, where);
  t.steps = field<std::size_t>(j, "steps", t.steps, where);
  t.learning_rate = field<double>(j, "learning_rate", t.learning_rate, where);
  t.ecirc_weight = field<double>(j, "ecirc_weight", t.ecirc_weight, where);
  t.ecirc_samples = field<std::size_t>(j, "ecirc_samples", t.ecirc_samples, where);
  t.seed = field<std::uint64_t>(j, "seed", default_seed, where);
  t.grad_tolerance = field<double>(j, "grad_tolerance", t.grad_tolerance, where);
  if (!(t.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(t.ecirc_weight >= 0.0)) throw ConfigError("ecirc_weight must be non-negative");
  if (t.coverage == TrainConfig::Coverage::fraction && !(t.fraction > 0.0 && t.fraction <= 1.0)) {
    throw ConfigError("coverage fraction must lie in (0, 1]");
  }
  return t;
}

}  // namespace

ExperimentConfig parse_config(const json& j, std::optional<std::uint64_t> seed_override, const std::string& base_dir) {
  check_keys(j, {"seed", "model", "contexts", "curl_scan", "order_gap", "consistency", "order_error", "commutator",
                 "stress", "train", "output"},
             "config");
  ExperimentConfig c;
  c.seed = seed_override ? *seed_override : field<std::uint64_t>(j, "seed", 0, "config");
  const std::uint64_t seed = c.seed;

  const json model = j.value("model", json::object());
  check_keys(model, {"file", "synthetic", "oracle", "delta", "perturbation_seed"}, "model");
  if (auto file = optional_field<std::string>(model, "file", "model")) {
    std::filesystem::path p(*file);
    if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
    c.model.file = p.string();
  }
  if (model.contains("synthetic")) c.model.synthetic = parse_synthetic(model.at("synthetic"), seed);
  if (c.model.file && c.model.synthetic) throw ConfigError("model takes either a file or a synthetic spec, not both");
  c.model.oracle = field<std::string>(model, "oracle", "auto", "model");
  static const std::set<std::string> oracles{"auto", "bayes", "perturbed", "trained", "logit-table"};
  if (!oracles.contains(c.model.oracle)) throw ConfigError(fmt::format("unknown oracle '{}'", c.model.oracle));
  c.model.delta = field<double>(model, "delta", 0.0, "model");
  if (!(c.model.delta >= 0.0) || !std::isfinite(c.model.delta)) throw ConfigError("delta must be finite and >= 0");
  c.model.perturbation_seed = field<std::uint64_t>(model, "perturbation_seed", seed, "model");

  const json contexts = j.value("contexts", json::object());
  check_keys(contexts, {"explicit", "sampled"}, "contexts");
  if (contexts.contains("explicit")) {
    if (!contexts.at("explicit").is_array()) throw ConfigError("contexts.explicit must be an array");
    for (const auto& item : contexts.at("explicit")) c.contexts.explicit_contexts.push_back(parse_context(item));
  }
  if (contexts.contains("sampled")) {
    if (!c.contexts.explicit_contexts.empty()) throw ConfigError("contexts are either explicit or sampled");
    const json& s = contexts.at("sampled");
    check_keys(s, {"count", "block_size", "seed"}, "contexts.sampled");
    c.contexts.sampled = true;
    c.contexts.count = field<std::size_t>(s, "count", 1, "contexts.sampled");
    c.contexts.block_size = field<int>(s, "block_size", 0, "contexts.sampled");
    c.contexts.seed = field<std::uint64_t>(s, "seed", seed, "contexts.sampled");
    if (c.contexts.count == 0) throw ConfigError("contexts.sampled.count must be positive");
  }

  const json scan = j.value("curl_scan", json::object());
  check_keys(scan, {"plan", "samples", "seed", "witnesses", "bins"}, "curl_scan");
  const auto plan = field<std::string>(scan, "plan", "exhaustive", "curl_scan");
  if (plan != "exhaustive" && plan != "monte-carlo") throw ConfigError(fmt::format("unknown plan '{}'", plan));
  c.curl_scan.monte_carlo = plan == "monte-carlo";
  c.curl_scan.samples = field<std::size_t>(scan, "samples", c.curl_scan.samples, "curl_scan");
  c.curl_scan.seed = field<std::uint64_t>(scan, "seed", seed, "curl_scan");
  c.curl_scan.witnesses = field<std::size_t>(scan, "witnesses", c.curl_scan.witnesses, "curl_scan");
  c.curl_scan.bins = field<std::size_t>(scan, "bins", c.curl_scan.bins, "curl_scan");

  const json gap = j.value("order_gap", json::object());
  check_keys(gap, {"start", "end", "detour", "seed"}, "order_gap");
  c.order_gap.start = optional_field<Order>(gap, "start", "order_gap");
  c.order_gap.end = optional_field<Order>(gap, "end", "order_gap");
  c.order_gap.detour = field<int>(gap, "detour", 0, "order_gap");
  c.order_gap.seed = field<std::uint64_t>(gap, "seed", seed, "order_gap");
  if (c.order_gap.detour < 0) throw ConfigError("order_gap.detour must be >= 0");

  const json cons = j.value("consistency", json::object());
  check_keys(cons, {"tolerance"}, "consistency");
  c.consistency_tolerance = field<double>(cons, "tolerance", kConsistencyTolerance, "consistency");
  if (!(c.consistency_tolerance > 0.0)) throw ConfigError("consistency tolerance must be positive");

  const json oe = j.value("order_error", json::object());
  check_keys(oe, {"orders"}, "order_error");
  c.order_candidates = field<std::vector<Order>>(oe, "orders", {}, "order_error");

  const json comm = j.value("commutator", json::object());
  check_keys(comm, {"operator"}, "commutator");
  if (comm.contains("operator")) c.commutator_op = parse_operator(comm.at("operator"), "commutator.operator");

  const json stress = j.value("stress", json::object());
  check_keys(stress, {"widths", "schedulers", "operator", "runs", "seed"}, "stress");
  c.stress.widths = field<std::vector<std::size_t>>(stress, "widths", c.stress.widths, "stress");
  if (stress.contains("schedulers")) {
    if (!stress.at("schedulers").is_array()) throw ConfigError("stress.schedulers must be an array");
    c.stress.schedulers.clear();
    for (const auto& s : stress.at("schedulers")) c.stress.schedulers.push_back(parse_scheduler(s, seed));
  }
  if (stress.contains("operator")) c.stress.op = parse_operator(stress.at("operator"), "stress.operator");
  c.stress.runs = field<std::size_t>(stress, "runs", c.stress.runs, "stress");
  c.stress.seed = field<std::uint64_t>(stress, "seed", seed, "stress");
  if (c.stress.runs == 0 || c.stress.widths.empty() || c.stress.schedulers.empty()) {
    throw ConfigError("stress needs runs, widths and schedulers");
  }

  c.train = parse_train(j.value("train", json::object()), seed);

  const json out = j.value("output", json::object());
  check_keys(out, {"dir", "format"}, "output");
  c.out_dir = field<std::string>(out, "dir", c.out_dir, "output");
  c.format = field<std::string>(out, "format", c.format, "output");
  if (c.format != "json" && c.format != "json+csv") throw ConfigError(fmt::format("unknown format '{}'", c.format));
  return c;
}

json to_json(const PartialContext& context) {
  json observed = json::object();
  for (const auto& [pos, tok] : context.observed) observed[std::to_string(pos)] = tok;
  return {{"observed", observed}, {"block", context.block}, {"time", context.time}};
}

json config_to_json(const ExperimentConfig& c) {
  json model = {{"oracle", c.model.oracle}, {"delta", c.model.delta}, {"perturbation_seed", c.model.perturbation_seed}};
  if (c.model.file) model["file"] = *c.model.file;
  if (c.model.synthetic) model["synthetic"] = synthetic_to_json(*c.model.synthetic);

  json contexts = json::object();
  if (c.contexts.sampled) {
    contexts["sampled"] = {{"count", c.contexts.count}, {"block_size", c.contexts.block_size}, {"seed", c.contexts.seed}};
  } else {
    contexts["explicit"] = json::array();
    for (const auto& ctx : c.contexts.explicit_contexts) contexts["explicit"].push_back(to_json(ctx));
  }

  json gap = {{"detour", c.order_gap.detour}, {"seed", c.order_gap.seed}};
  if (c.order_gap.start) gap["start"] = *c.order_gap.start;
  if (c.order_gap.end) gap["end"] = *c.order_gap.end;

  json schedulers = json::array();
  for (const auto& s : c.stress.schedulers) schedulers.push_back(scheduler_to_json(s));

  return {
      {"seed", c.seed},
      {"model", model},
      {"contexts", contexts},
      {"curl_scan",
       {{"plan", c.curl_scan.monte_carlo ? "monte-carlo" : "exhaustive"},
        {"samples", c.curl_scan.samples},
        {"seed", c.curl_scan.seed},
        {"witnesses", c.curl_scan.witnesses},
        {"bins", c.curl_scan.bins}}},
      {"order_gap", gap},
      {"consistency", {{"tolerance", c.consistency_tolerance}}},
      {"order_error", {{"orders", c.order_candidates}}},
      {"commutator", {{"operator", operator_to_json(c.commutator_op)}}},
      {"stress",
       {{"widths", c.stress.widths},
        {"schedulers", schedulers},
        {"operator", operator_to_json(c.stress.op)},
        {"runs", c.stress.runs},
        {"seed", c.stress.seed}}},
      {"train",
       {{"coverage", to_string(c.train.coverage)},
        {"fraction", c.train.fraction},
        {"steps", c.train.steps},
        {"learning_rate", c.train.learning_rate},
        {"ecirc_weight", c.train.ecirc_weight},
        {"ecirc_samples", c.train.ecirc_samples},
        {"seed", c.train.seed},
        {"grad_tolerance", c.train.grad_tolerance}}},
      {"output", {{"dir", c.out_dir}, {"format", c.format}}},
  };
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  json canonical = config_to_json(config);
  // Where artifacts land does not change what they contain.
  canonical.erase("output");
  const std::string text = canonical.dump();
  return fnv1a64(std::span<const char>(text.data(), text.size()));
}

ModelFile model_file_from_json(const json& j) {
  check_keys(j, {"vocab_size", "positions", "log_mass", "perturbation", "logit_table", "id"}, "model file");
  for (const char* key : {"vocab_size", "positions", "log_mass"}) {
    if (!j.contains(key)) throw ConfigError(fmt::format("model file lacks '{}'", key));
  }
  const int v = field<int>(j, "vocab_size", 0, "model file");
  const int m = field<int>(j, "positions", 0, "model file");
  if (m < 1 || m > kMaxPositions) throw CapExceeded(fmt::format("positions {} outside [1, {}]", m, kMaxPositions));
  Vocabulary check_vocab(v);
  ModelFile out;
  out.joint = std::make_shared<const TabularJointModel>(
      v, m, field<std::vector<double>>(j, "log_mass", {}, "model file"),
      field<std::string>(j, "id", "model-file", "model file"));
  if (j.contains("perturbation")) {
    const json& p = j.at("perturbation");
    check_keys(p, {"delta", "seed"}, "model file perturbation");
    const double delta = field<double>(p, "delta", 0.0, "perturbation");
    if (!(delta >= 0.0) || !std::isfinite(delta)) throw ConfigError("perturbation delta must be finite and >= 0");
    out.perturbation = std::make_pair(delta, field<std::uint64_t>(p, "seed", 0, "perturbation"));
  }
  if (j.contains("logit_table")) {
    const json& t = j.at("logit_table");
    check_keys(t, {"logits", "history"}, "model file logit_table");
    out.logit_table.emplace(m, v, field<std::vector<double>>(t, "logits", {}, "logit_table"));
  }
  return out;
}

ModelFile read_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open model file '{}'", path));
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("model file '{}' is not valid JSON: {}", path, e.what()));
  }
  return model_file_from_json(j);
}

json model_file_to_json(const TabularJointModel& joint, const std::optional<std::pair<double, std::uint64_t>>& perturbation,
                        const LogitTable* logits) {
  json j = {{"vocab_size", joint.vocabulary().size()},
            {"positions", joint.positions()},
            {"id", joint.id()},
            {"log_mass", std::vector<double>(joint.log_mass().begin(), joint.log_mass().end())}};
  if (perturbation) j["perturbation"] = {{"delta", perturbation->first}, {"seed", perturbation->second}};
  if (logits) j["logit_table"] = {{"logits", std::vector<double>(logits->data().begin(), logits->data().end())}};
  return j;
}

}  // namespace curlgauge
