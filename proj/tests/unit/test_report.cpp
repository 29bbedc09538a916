// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "curlgauge/error.hpp"
#include "curlgauge/report.hpp"

using namespace curlgauge;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("curlgauge-test-" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string read(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(std::vector<std::string> args, std::string* err_text = nullptr) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_command(args, out, err);
  if (err_text) *err_text = err.str();
  return code;
}

// Minimal RFC 4180 reader for round-trip checks.
std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows(1);
  std::string cell;
  bool quoted = false;
  for (std::size_t k = 0; k < text.size(); ++k) {
    const char ch = text[k];
    if (quoted) {
      if (ch == '"' && k + 1 < text.size() && text[k + 1] == '"') {
        cell += '"';
        ++k;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cell += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      rows.back().push_back(cell);
      cell.clear();
    } else if (ch == '\n') {
      rows.back().push_back(cell);
      cell.clear();
      rows.emplace_back();
    } else {
      cell += ch;
    }
  }
  rows.pop_back();
  return rows;
}

const char* kLadderConfig = R"({
  "seed": 3,
  "model": {"synthetic": {"family": "tc-ladder", "positions": 4, "vocab_size": 2, "level": 2}, "oracle": "bayes"},
  "contexts": {"sampled": {"count": 4, "block_size": 3}},
  "stress": {"widths": [1, 2, 3], "schedulers": [{"kind": "left-to-right"}, {"kind": "confidence"}], "runs": 40}
})";

}  // namespace

TEST_CASE("unknown config field exits 2") {
  TempDir dir("unknown");
  write(dir.path / "c.json", R"({"seed": 1, "curl_scan": {"plan": "exhaustive", "smaples": 3}})");
  std::string err;
  CHECK(run({"curl-scan", "--config", (dir.path / "c.json").string(), "--out", (dir.path / "o").string()}, &err) ==
        kExitConfig);
  CHECK(err.find("smaples") != std::string::npos);
  CHECK(!fs::exists(dir.path / "o"));
}

TEST_CASE("malformed JSON exits 2 without artifacts") {
  TempDir dir("malformed");
  write(dir.path / "c.json", R"({"seed": 1, "model": )");
  CHECK(run({"tc", "--config", (dir.path / "c.json").string(), "--out", (dir.path / "o").string()}) == kExitConfig);
  CHECK(!fs::exists(dir.path / "o"));
}

TEST_CASE("usage errors and help") {
  CHECK(run({"frobnicate"}) == kExitConfig);
  CHECK(run({}) == kExitConfig);
  CHECK(run({"--help"}) == kExitOk);
  CHECK(run({"tc", "--format", "xml"}) == kExitConfig);
}

TEST_CASE("consistency on a Bayes model file") {
  TempDir dir("consistency");
  write(dir.path / "c.json", R"({"seed": 2, "model": {"synthetic": {"family": "chain", "positions": 3, "vocab_size": 3}}})");
  REQUIRE(run({"synth-gen", "--config", (dir.path / "c.json").string(), "--out", dir.path.string()}) == kExitOk);
  REQUIRE(fs::exists(dir.path / "model.json"));
  const fs::path out = dir.path / "check";
  CHECK(run({"consistency", "--model", (dir.path / "model.json").string(), "--out", out.string()}) == kExitOk);
  const json report = json::parse(read(out / "consistency_report.json"));
  CHECK(report.at("sections").at("consistency").at("consistency").at(0).at("consistent") == true);
  CHECK(report.at("tool_version") == kToolVersion);
  CHECK(report.at("config_hash").get<std::string>().size() == 16);
  CHECK(report.contains("seed"));
  CHECK(read(out / "consistency.csv").find(",true,") != std::string::npos);
}

TEST_CASE("stress rows are the product of config cardinalities") {
  TempDir dir("stress");
  write(dir.path / "c.json", kLadderConfig);
  REQUIRE(run({"stress", "--config", (dir.path / "c.json").string(), "--out", dir.path.string()}) == kExitOk);
  const auto rows = parse_csv(read(dir.path / "stress.csv"));
  CHECK(rows.size() == 1 + 3 * 2 * 4);
  CHECK(rows.front().front() == "context");
  CHECK(fs::exists(dir.path / "stress_spearman.csv"));
}

TEST_CASE("format json skips CSV files") {
  TempDir dir("format");
  write(dir.path / "c.json", kLadderConfig);
  REQUIRE(run({"tc", "--config", (dir.path / "c.json").string(), "--out", dir.path.string(), "--format", "json"}) ==
          kExitOk);
  CHECK(fs::exists(dir.path / "tc_report.json"));
  CHECK(!fs::exists(dir.path / "dependence.csv"));
}

TEST_CASE("empty section gives a header-only CSV") {
  const json report = {{"sections", {{"tc", json::object()}, {"stress", {{"stress", json::array()}}}}}};
  const auto tables = emit_plot_data(report);
  REQUIRE(tables.size() == 4);
  for (const auto& t : tables) {
    CHECK(t.rows.empty());
    CHECK(to_csv(t).find('\n') == to_csv(t).size() - 1);
  }
}

TEST_CASE("CSV round-trips the JSON values") {
  const json raw = json::parse(kLadderConfig);
  const json report = run_experiment("stress", parse_config(raw));
  const json& rows = report.at("sections").at("stress").at("stress");
  CsvTable stress;
  for (const auto& t : emit_plot_data(report)) {
    if (t.name == "stress") stress = t;
  }
  const auto parsed = parse_csv(to_csv(stress));
  REQUIRE(parsed.size() == rows.size() + 1);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < parsed[0].size(); ++c) {
      const json& v = rows[r].at(parsed[0][c]);
      const std::string& text = parsed[r + 1][c];
      if (v.is_number_float()) {
        CHECK(std::strtod(text.c_str(), nullptr) == v.get<double>());
      } else if (v.is_number()) {
        CHECK(std::stoll(text) == v.get<long long>());
      } else {
        CHECK(text == v.get<std::string>());
      }
    }
  }
  CsvTable quoting{"q", {"a", "b"}, {{"x,y", "say \"hi\""}}};
  CHECK(parse_csv(to_csv(quoting))[1] == std::vector<std::string>{"x,y", "say \"hi\""});
  CHECK(format_number(0.1) == "0.10000000000000001");
}

TEST_CASE("config hash and seed override") {
  const json raw = json::parse(kLadderConfig);
  const auto a = parse_config(raw);
  auto b = parse_config(raw);
  CHECK(config_hash(a) == config_hash(b));
  b.out_dir = "elsewhere";
  CHECK(config_hash(a) == config_hash(b));
  const auto c = parse_config(raw, 99);
  CHECK(c.seed == 99);
  CHECK(config_hash(c) != config_hash(a));
  CHECK(parse_config(config_to_json(a)).seed == a.seed);
  CHECK(config_hash(parse_config(config_to_json(a))) == config_hash(a));
}

TEST_CASE("refusals map to exit codes") {
  TempDir dir("codes");
  write(dir.path / "cap.json", R"({"model": {"synthetic": {"family": "chain", "positions": 6, "vocab_size": 2}},
                                   "contexts": {"explicit": [{"block": [0, 1, 2, 3, 4, 5]}]}})");
  CHECK(run({"order-error", "--config", (dir.path / "cap.json").string(), "--out", (dir.path / "o").string()}) ==
        kExitCap);
  write(dir.path / "div.json", R"({"model": {"synthetic": {"family": "chain", "positions": 3, "vocab_size": 2}},
                                   "train": {"steps": 5, "ecirc_weight": 1e308}})");
  CHECK(run({"train", "--config", (dir.path / "div.json").string(), "--out", (dir.path / "o").string()}) ==
        kExitTraining);
  write(dir.path / "ctx.json", R"({"model": {"synthetic": {"family": "chain", "positions": 3, "vocab_size": 2}},
                                   "contexts": {"explicit": [{"block": [0, 7]}]}})");
  CHECK(run({"tc", "--config", (dir.path / "ctx.json").string(), "--out", (dir.path / "o").string()}) == kExitConfig);
  CHECK(!fs::exists(dir.path / "o"));
}

TEST_CASE("train writes a loadable model file") {
  TempDir dir("train");
  write(dir.path / "c.json", R"({"seed": 4, "model": {"synthetic": {"family": "chain", "positions": 3, "vocab_size": 2}},
                                 "train": {"coverage": "prefix-only", "steps": 50}})");
  REQUIRE(run({"train", "--config", (dir.path / "c.json").string(), "--out", dir.path.string()}) == kExitOk);
  const json report = json::parse(read(dir.path / "train_report.json"));
  CHECK(report.at("sections").at("train").at("training_history").size() == 51);
  const auto model = read_model_file((dir.path / "trained_model.json").string());
  CHECK(model.logit_table.has_value());
  CHECK(run({"curl-scan", "--model", (dir.path / "trained_model.json").string(), "--out",
             (dir.path / "scan").string()}) == kExitOk);
  const json scan = json::parse(read(dir.path / "scan" / "curl-scan_report.json"));
  CHECK(scan.at("model_id").get<std::string>().rfind("logit-table:", 0) == 0);
}
