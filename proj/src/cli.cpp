// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <ostream>
#include <string_view>
#include <unistd.h>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "curlgauge/error.hpp"
#include "curlgauge/report.hpp"

namespace curlgauge {

namespace {

struct TableSpec {
  const char* section;
  const char* table;
  std::vector<const char*> columns;
};

const std::vector<TableSpec>& table_specs() {
  static const std::vector<TableSpec> specs = {
      {"curl_scan", "curl_summary", {"context", "ecirc_abs", "ecirc_abs_se", "ecirc_norm", "ecirc_norm_se", "max_curl", "n"}},
      {"curl_scan", "curl_histogram", {"context", "bin_lo", "bin_hi", "count"}},
      {"curl_scan", "order_swap_kl", {"context", "i", "j", "kl", "std_error", "exact"}},
      {"order_gap", "order_gap", {"context", "assignment", "log_ratio", "curl_sum", "residual"}},
      {"tc", "dependence",
       {"context", "tc", "sum_marginal_entropies", "joint_entropy", "independent_parallel_kl", "sum_pairwise_cmi",
        "cmi_proxy_gap"}},
      {"tc", "pairwise_cmi", {"context", "i", "j", "cmi"}},
      {"order_error", "order_ranking", {"context", "rank", "order", "cross_entropy", "conditional_entropy", "kl_total"}},
      {"order_error", "per_step_kl", {"context", "order", "step", "kl"}},
      {"order_error", "order_strata", {"context", "stratum", "count", "weight", "mean_kl"}},
      {"commutator", "commutator", {"context", "i", "j", "value"}},
      {"commutator", "conflict", {"context", "conflict", "excluded_pairs", "degenerate"}},
      {"stress", "stress",
       {"context", "scheduler", "width", "nll", "degradation", "ecirc_abs", "tc", "mean_eps", "conflict"}},
      {"stress", "stress_spearman", {"predictor", "rho"}},
      {"consistency", "consistency",
       {"context", "consistent", "max_gap", "max_curl", "permutation_verdict", "square_verdict", "orders_checked",
        "squares_checked"}},
      {"train", "training_history", {"step", "loss", "ecirc", "grad_norm"}},
      {"synth_gen", "joint", {"state", "log_mass"}},
  };
  return specs;
}

std::string cell(const json& v) {
  if (v.is_null()) return "";
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return v.dump();
  if (v.is_number()) return format_number(v.get<double>());
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = path.string() + fmt::format(".tmp-{}", ::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write '{}'", tmp));
    out << content;
    out.flush();
    if (!out) throw Error(fmt::format("failed writing '{}'", tmp));
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

std::string format_number(double x) { return fmt::format("{:.17g}", x); }

std::vector<CsvTable> emit_plot_data(const json& report) {
  std::vector<CsvTable> out;
  if (!report.contains("sections")) return out;
  const json& sections = report.at("sections");
  for (const auto& spec : table_specs()) {
    if (!sections.contains(spec.section)) continue;
    CsvTable table;
    table.name = spec.table;
    for (const char* c : spec.columns) table.header.emplace_back(c);
    const json& section = sections.at(spec.section);
    if (section.contains(spec.table)) {
      for (const auto& row : section.at(spec.table)) {
        std::vector<std::string> cells;
        for (const char* c : spec.columns) cells.push_back(row.contains(c) ? cell(row.at(c)) : "");
        table.rows.push_back(std::move(cells));
      }
    }
    out.push_back(std::move(table));
  }
  return out;
}

std::string to_csv(const CsvTable& table) {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) out += (k ? "," : "") + quote(cells[k]);
    out += '\n';
  };
  line(table.header);
  for (const auto& row : table.rows) line(row);
  return out;
}

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"curlgauge: order-consistency diagnostics for conditional samplers", "curlgauge"};
  app.require_subcommand(1);
  std::string config_path;
  std::string model_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string format;
  static const std::vector<std::pair<const char*, const char*>> commands = {
      {"curl-scan", "local curl statistics and pairwise order-swap KL"},
      {"order-gap", "pseudo-joint gap between two orders via adjacent swaps"},
      {"tc", "total correlation, independent-parallel gap, pairwise CMI"},
      {"order-error", "per-order cross-entropy profile and ranking"},
      {"commutator", "pairwise update commutators and conflict score"},
      {"stress", "parallel-width degradation harness"},
      {"synth-gen", "generate a synthetic joint and write it as a model file"},
      {"train", "train a tabular oracle and write it as a model file"},
      {"consistency", "exact order-consistency check with witness"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "experiment config (JSON)");
    sub->add_option("--model", model_path, "model file; overrides model.file");
    sub->add_option("--seed", seed, "global seed; overrides the config");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--format", format, "json or json+csv")->check(CLI::IsMember({"json", "json+csv"}));
  }

  std::vector<std::string> argv_copy(args.rbegin(), args.rend());
  try {
    app.parse(argv_copy);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    json raw = json::object();
    std::string base_dir;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw ConfigError(fmt::format("cannot open config '{}'", config_path));
      try {
        raw = json::parse(in);
      } catch (const json::parse_error& e) {
        throw ConfigError(fmt::format("config '{}' is not valid JSON: {}", config_path, e.what()));
      }
      base_dir = std::filesystem::path(config_path).parent_path().string();
    }
    if (!model_path.empty()) {
      if (!raw.is_object()) throw ConfigError("config must be a JSON object");
      raw["model"]["file"] = std::filesystem::absolute(model_path).string();
      raw["model"].erase("synthetic");
    }
    ExperimentConfig config = parse_config(raw, seed, base_dir);
    if (!out_dir.empty()) config.out_dir = out_dir;
    if (!format.empty()) config.format = format;

    json report = run_experiment(command, config);

    // Everything is computed before the first byte is written.
    std::vector<std::pair<std::string, std::string>> files;
    if (report.contains("artifacts")) {
      for (const auto& [name, content] : report.at("artifacts").items()) files.emplace_back(name, content.dump(2) + "\n");
      report.erase("artifacts");
    }
    const std::string stem = command;
    files.emplace_back(stem + "_report.json", report.dump(2) + "\n");
    if (config.format == "json+csv") {
      for (const auto& table : emit_plot_data(report)) files.emplace_back(table.name + ".csv", to_csv(table));
    }
    const std::filesystem::path dir(config.out_dir);
    std::filesystem::create_directories(dir);
    for (const auto& [name, content] : files) write_atomic(dir / name, content);
    out << fmt::format("{}: wrote {} file(s) to {}\n", command, files.size(), dir.string());
    return kExitOk;
  } catch (const TrainingFailure& e) {
    err << "training failure: " << e.what() << "\n";
    return kExitTraining;
  } catch (const CapExceeded& e) {
    err << "refused: " << e.what() << "\n";
    return kExitCap;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ContractViolation& e) {
    err << "invalid input: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DimensionError& e) {
    err << "invalid input: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DegenerateComparison& e) {
    err << "degenerate comparison: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace curlgauge
