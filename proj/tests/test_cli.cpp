#include "fixtures.hpp"

#include "weldood/commands.hpp"
#include "weldood/errors.hpp"
#include "weldood/metrics.hpp"
#include "weldood/run_config.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <sys/wait.h>

using namespace weldood;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("weldood_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(WELDOOD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("default config validates and round-trips through JSON") {
  const RunConfig c = default_run_config();
  CHECK_NOTHROW(c.validate());
  CHECK(c.id_regimes() == std::vector<std::string>{"A"});
  CHECK(c.deploy.deployment.trigger_fraction == 0.1);
  CHECK(c.benchmark.beta == 0.5);
  const std::string text = format_run_config(c);
  CHECK(format_run_config(parse_run_config(text)) == text);
  CHECK(format_run_config(parse_run_config("{}")) == text);
}

TEST_CASE("config rejects unknown keys and invalid values") {
  CHECK_THROWS_AS(parse_run_config(R"({"sead": 3})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"deploy": {"update": {"epoch": 3}}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"regimes": {"A": {"amplitud": [1, 1]}}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"deploy": {"trigger_fraction": 0}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"deploy": {"trigger_fraction": 1.5}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"benchmark": {"beta": 0}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"benchmark": {"methods": ["energy"]}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"data": {"test": [{"regime": "Z", "count": 4}]}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"seed": "one"})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("{not json"), ConfigError);
  const RunConfig ok = parse_run_config(R"({"seed": 9, "deploy": {"trigger_fraction": 1.0}})");
  CHECK(ok.seed == 9);
  CHECK(ok.deploy.deployment.trigger_fraction == 1.0);
}

TEST_CASE("generate writes deterministic splits with regime bookkeeping") {
  RunConfig c = fixture::tiny_config();
  c.out_dir = scratch("gen1");
  const GenerateSummary s = cmd_generate(c);
  CHECK(s.train == 48);
  CHECK(s.val == 24);
  CHECK(s.test == 32);
  const CycleBatch test = load_cycles(c.out_dir / "test.csv");
  CHECK(test.size() == 32);
  const auto [id, ood] = split_id_ood(c, test);
  CHECK(id.size() == 16);
  CHECK(ood.size() == 16);
  CHECK(fs::exists(c.out_dir / "resolved_config.json"));
  const std::string first = read_text(c.out_dir / "train.csv");
  c.out_dir = scratch("gen2");
  cmd_generate(c);
  CHECK(read_text(c.out_dir / "train.csv") == first);
}

TEST_CASE("benchmark rows recompute from their ID and OOD columns") {
  RunConfig c = fixture::tiny_config();
  c.out_dir = scratch("bench");
  c.benchmark.methods = {ScoreKind::kArNll, ScoreKind::kQuant};
  const BenchmarkSummary s = cmd_benchmark(c);
  // Two seeds x (none + two methods) x two metrics.
  CHECK(s.rows.size() == 12);
  const auto rows = csv_rows(read_text(c.out_dir / "benchmark.csv"));
  REQUIRE(rows.size() > 1);
  CHECK(rows[0][0] == "row");
  std::size_t seed_rows = 0, mean_rows = 0, std_rows = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    REQUIRE(r.size() == 14);
    if (r[0] == "mean") ++mean_rows;
    if (r[0] == "std") ++std_rows;
    if (r[0] != "seed") continue;
    ++seed_rows;
    CHECK(std::stod(r[4]) == 0.5);
    if (r[12] == "undefined") continue;
    const double id = std::stod(r[10]), ood = std::stod(r[11]);
    CHECK(std::abs(std::stod(r[12]) - (1.0 - ood / (1.5 * id))) < 1e-9);
    CHECK(std::stoul(r[6]) <= std::stoul(r[7]));
    if (r[2] == "none") CHECK(r[6] == r[7]);
  }
  CHECK(seed_rows == 12);
  CHECK(mean_rows == 6);
  CHECK(std_rows == 6);
  CHECK(fs::exists(c.out_dir / "metrics.csv"));
}

TEST_CASE("deploy artifacts agree with each other") {
  RunConfig c = fixture::tiny_config();
  c.out_dir = scratch("deploy");
  c.deploy.method = ScoreKind::kRecon;
  const DeploySummary s = cmd_deploy(c);
  REQUIRE(s.reports.size() == 3);
  const auto rows = csv_rows(read_text(c.out_dir / "deployment.csv"));
  CHECK(rows.size() == 1 + 3 * 4);
  std::size_t gated_triggers = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i][0] == "ood_replay" && rows[i][8] == "1") ++gated_triggers;
  }
  CHECK(gated_triggers == s.reports[2].trigger_count());
  const std::string svg = read_text(c.out_dir / "deployment.svg");
  std::size_t rects = 0;
  for (std::size_t p = svg.find("class=\"trigger\""); p != std::string::npos; p = svg.find("class=\"trigger\"", p + 1)) ++rects;
  CHECK(rects == gated_triggers);
  const auto j = nlohmann::json::parse(read_text(c.out_dir / "deploy_summary.json"));
  CHECK(j.at("method") == "recon");
  CHECK(j.at("experiences") == 4);
}

TEST_CASE("command line exit codes") {
  const fs::path dir = scratch("cli");
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("") == kExitConfig);
  CHECK(run_cli("frobnicate") == kExitConfig);
  CHECK(run_cli("generate --config " + (dir / "missing.json").string()) == kExitConfig);
  write_text(dir / "bad.json", R"({"deploy": {"trigger_fraction": 2}})");
  CHECK(run_cli("generate --config " + (dir / "bad.json").string()) == kExitConfig);
  write_text(dir / "cycles.csv", "cycle_id,t,current,voltage,label\n" + std::string("c0,0,1.0,nan,1\n"));
  write_text(dir / "train.csv", read_text(dir / "cycles.csv"));
  write_text(dir / "val.csv", read_text(dir / "cycles.csv"));
  CHECK(run_cli("train --data " + dir.string() + " --out " + (dir / "o").string()) == kExitData);

  RunConfig c = fixture::tiny_config();
  c.out_dir = dir / "small";
  c.ar.ar_learning_rate = 1.7e308;
  write_text(dir / "diverge.json", format_run_config(c));
  CHECK(run_cli("train --config " + (dir / "diverge.json").string()) == kExitDivergence);

  c.ar.ar_learning_rate = fixture::tiny_config().ar.ar_learning_rate;
  write_text(dir / "small.json", format_run_config(c));
  CHECK(run_cli("generate --config " + (dir / "small.json").string()) == 0);
  CHECK(run_cli("train --config " + (dir / "small.json").string() + " --data " + c.out_dir.string()) == 0);
  const std::string bundle = (c.out_dir / "bundle.bin").string();
  CHECK(run_cli("score --config " + (dir / "small.json").string() + " --bundle " + bundle + " --input " +
                (c.out_dir / "test.csv").string()) == 0);
  CHECK(csv_rows(read_text(c.out_dir / "scores.csv")).size() == 33);
  CHECK(run_cli("threshold --config " + (dir / "small.json").string() + " --method quant --bundle " + bundle +
                " --input " + (c.out_dir / "val.csv").string()) == 0);
  CHECK(fs::exists(c.out_dir / "threshold.json"));
  CHECK(run_cli("score --bundle " + bundle + " --input " + (dir / "cycles.csv").string()) == kExitData);
}
