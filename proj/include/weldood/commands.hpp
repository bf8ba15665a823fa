#pragma once

// The command layer behind the CLI. Each command reads a RunConfig, writes
// its artifacts plus resolved_config.json into out_dir, and returns a summary.

#include "weldood/bundle.hpp"
#include "weldood/continual.hpp"
#include "weldood/reports.hpp"
#include "weldood/run_config.hpp"
#include "weldood/thresholding.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace weldood {

struct DataSplits {
  CycleBatch train;
  CycleBatch val;
  CycleBatch test;
};

/// Generates every configured split; deterministic per seed.
DataSplits generate_splits(const RunConfig& config, std::uint64_t seed);

/// Test cycles split by whether their regime appears in the training split.
std::pair<CycleBatch, CycleBatch> split_id_ood(const RunConfig& config, const CycleBatch& test);

struct GenerateSummary {
  std::size_t train = 0, val = 0, test = 0;
};
/// Writes train.csv, val.csv and test.csv.
GenerateSummary cmd_generate(const RunConfig& config);

struct TrainSummary {
  PipelineTrainResult result;
  double val_accuracy = 0.0;
  double val_f1 = 0.0;
};
/// Trains on generated data (or train.csv/val.csv from `data_dir`) and writes
/// bundle.bin, training_history.csv and vq_history.csv.
TrainSummary cmd_train(const RunConfig& config, const std::optional<std::filesystem::path>& data_dir = {});

/// Validation predictions, OOD scores, and the frozen Youden threshold.
ThresholdDecision fit_method_threshold(const ModelBundle& bundle, const ScoreMethod& method, const CycleBatch& val);

/// Mahalanobis statistics come from the training batch; the ODIN settings
/// from the benchmark config.
ScoreMethod make_method(const RunConfig& config, ScoreKind kind, const ModelBundle& bundle, const CycleBatch& train);

struct BenchmarkSummary {
  std::vector<BenchmarkRow> rows;
  std::vector<MetricRow> metrics;
};
/// One training run per benchmark seed (data and weights both seeded),
/// unless `bundle` is given, in which case that bundle is evaluated once on
/// data from config.seed. Writes benchmark.csv and metrics.csv.
BenchmarkSummary cmd_benchmark(const RunConfig& config, const std::optional<ModelBundle>& bundle = {});

/// Metric over the accepted subset; 0 when nothing is accepted.
double accepted_metric(MetricKind kind, const std::vector<int>& predictions, const std::vector<int>& labels,
                       const std::vector<bool>& flagged, std::size_t* accepted = nullptr);

struct DeploySummary {
  std::vector<DeploymentReport> reports;  ///< no_cl, replay, ood_replay
  double theta = 0.0;
  std::optional<double> label_savings;
};
/// Trains (or takes) the initial bundle, fits theta on validation data, runs
/// the three strategies over the configured stream and writes deployment.csv,
/// deployment.svg and deploy_summary.json.
DeploySummary cmd_deploy(const RunConfig& config, const std::optional<ModelBundle>& bundle = {});

/// Writes `contents` to `path`, creating parent directories.
void write_text(const std::filesystem::path& path, const std::string& contents);
std::string read_text(const std::filesystem::path& path);

}  // namespace weldood
