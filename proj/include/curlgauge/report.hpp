// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration, model files, report serialization and the
// command-line driver.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "curlgauge/decoding.hpp"
#include "curlgauge/model.hpp"
#include "curlgauge/pseudo_joint.hpp"
#include "curlgauge/synthetic.hpp"
#include "curlgauge/tabular.hpp"

namespace curlgauge {

using json = nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";

// Exit codes of run_command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitCap = 3;
inline constexpr int kExitTraining = 4;

// ---- model files ----

struct ModelFile {
  std::shared_ptr<const TabularJointModel> joint;
  std::optional<std::pair<double, std::uint64_t>> perturbation;  // delta, seed
  std::optional<LogitTable> logit_table;
};

ModelFile read_model_file(const std::string& path);
ModelFile model_file_from_json(const json& j);
json model_file_to_json(const TabularJointModel& joint, const std::optional<std::pair<double, std::uint64_t>>& perturbation,
                        const LogitTable* logits);

// ---- configuration ----

struct ModelSource {
  std::optional<std::string> file;
  std::optional<SyntheticTaskSpec> synthetic;
  // auto | bayes | perturbed | trained; auto follows the model file.
  std::string oracle = "auto";
  double delta = 0.0;
  std::uint64_t perturbation_seed = 0;
};

struct ContextSource {
  std::vector<PartialContext> explicit_contexts;
  bool sampled = false;
  std::size_t count = 1;
  int block_size = 0;  // 0 means every position
  std::uint64_t seed = 0;
};

// Pair KLs follow the plan: exact when exhaustive, sampled otherwise.
struct CurlScanParams {
  bool monte_carlo = false;
  std::size_t samples = 10000;
  std::uint64_t seed = 0;
  std::size_t witnesses = 5;
  std::size_t bins = 20;
};

struct OrderGapParams {
  std::optional<Order> start;  // default: ascending block
  std::optional<Order> end;    // default: descending block
  int detour = 0;              // extra random swaps before the path settles
  std::uint64_t seed = 0;
};

struct StressParams {
  std::vector<std::size_t> widths{1};
  std::vector<SchedulerSpec> schedulers{SchedulerSpec::left_to_right()};
  UpdateOperator op = UpdateOperator::sample();
  std::size_t runs = 200;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  ModelSource model;
  ContextSource contexts;
  CurlScanParams curl_scan;
  OrderGapParams order_gap;
  double consistency_tolerance = kConsistencyTolerance;
  std::vector<Order> order_candidates;  // empty: every permutation of the block
  UpdateOperator commutator_op = UpdateOperator::argmax();
  StressParams stress;
  TrainConfig train;
  std::string out_dir = "curlgauge-out";
  std::string format = "json+csv";
};

// Throws ConfigError on unknown fields or invalid values. Seeds missing
// from sections inherit `seed` (or `seed_override` when given).
ExperimentConfig parse_config(const json& j, std::optional<std::uint64_t> seed_override = std::nullopt,
                              const std::string& base_dir = "");

// Canonical form with every default filled in; stable key order.
json config_to_json(const ExperimentConfig& config);
std::uint64_t config_hash(const ExperimentConfig& config);

// ---- report pieces ----

json to_json(const PartialContext& context);
json to_json(const CurlSample& sample);
json to_json(const Estimate& estimate);

// ---- commands ----

// Runs one subcommand and returns the full report (no files written).
// Model-producing commands also return their model file under "artifacts".
json run_experiment(const std::string& command, const ExperimentConfig& config);

struct CsvTable {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Long-format tables derived from the report's sections. A section present
// with no rows yields a header-only table.
std::vector<CsvTable> emit_plot_data(const json& report);
std::string to_csv(const CsvTable& table);
std::string format_number(double x);

// Report with wall-clock metadata removed, for reproducibility checks.
json numeric_content(const json& report);

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace curlgauge
