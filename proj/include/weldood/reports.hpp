#pragma once

// CSV and SVG renderings of training, benchmark and deployment results.
// Every formatter is deterministic: fixed precision, no timestamps.

#include "weldood/ar_model.hpp"
#include "weldood/continual.hpp"
#include "weldood/metrics.hpp"
#include "weldood/vq_codec.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace weldood {

std::string format_training_history_csv(const std::vector<EpochRecord>& history);
std::string format_vq_history_csv(const std::vector<VqEpochRecord>& trace);

/// One detector/metric evaluation for one seed. ID and OOD values are the
/// metric over the samples the detector accepts (score < theta); method
/// "none" accepts everything.
struct BenchmarkRow {
  std::uint64_t seed = 0;
  std::string method;
  MetricKind metric = MetricKind::kF1;
  double beta = kDefaultBeta;
  double theta = 0.0;
  std::size_t id_accepted = 0;
  std::size_t id_total = 0;
  std::size_t ood_accepted = 0;
  std::size_t ood_total = 0;
  double id_value = 0.0;
  double ood_value = 0.0;
  std::optional<double> ood_score;  ///< empty when ID performance is 0
  std::optional<double> auroc;      ///< ID-vs-OOD separation; empty for "none"
};

/// Per-seed rows followed by mean and std rows for each (method, metric).
/// Undefined cells are written as "undefined"; aggregates skip them.
std::string format_benchmark_csv(const std::vector<BenchmarkRow>& rows);

struct MetricRow {
  std::string dataset;
  std::string method;
  std::string metric;
  double value = 0.0;
};
std::string format_metric_rows_csv(const std::vector<MetricRow>& rows);

/// Long format: one row per (strategy, experience).
std::string format_deployment_csv(const std::vector<DeploymentReport>& reports);

/// Per-experience F1 lines for each strategy; every triggered experience of
/// an OOD-gated run is shaded and carries class="trigger".
std::string render_deployment_svg(const std::vector<DeploymentReport>& reports);

/// printf-style "%.12g" with inf/-inf/nan spelled out.
std::string format_number(double value);

}  // namespace weldood
