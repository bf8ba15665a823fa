#pragma once

// JSON run configuration shared by every command. Unknown keys are rejected
// at any nesting level; omitted keys keep their defaults.

#include "weldood/ar_model.hpp"
#include "weldood/continual.hpp"
#include "weldood/metrics.hpp"
#include "weldood/ood_scoring.hpp"
#include "weldood/signal.hpp"
#include "weldood/vq_codec.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace weldood {

/// `count` cycles drawn from the named regime.
struct SplitBlock {
  std::string regime;
  int count = 0;
};

struct DataConfig {
  std::vector<SplitBlock> train;
  std::vector<SplitBlock> val;
  std::vector<SplitBlock> test;
};

struct BenchmarkConfig {
  std::vector<ScoreKind> methods;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  double beta = kDefaultBeta;
  double odin_temperature = 1000.0;
  double odin_epsilon = 0.0014;
};

struct StreamBlock {
  std::string regime;
  int experiences = 0;
};

struct DeployConfig {
  ScoreKind method = ScoreKind::kArNll;
  int cycles_per_experience = 40;
  std::vector<StreamBlock> schedule;
  DeploymentConfig deployment;
  std::size_t tail_window = 5;  ///< experiences averaged for the final-F1 summary
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "out";
  std::map<std::string, ProcessParams> regimes;
  DataConfig data;
  VqConfig vq;
  ArConfig ar;
  BenchmarkConfig benchmark;
  DeployConfig deploy;

  /// Throws ConfigError on any invalid field or reference to an undefined regime.
  void validate() const;
  const ProcessParams& regime(const std::string& name) const;
  /// Regimes used by the training split; everything else counts as OOD.
  std::vector<std::string> id_regimes() const;
};

/// The configuration used when no file is given: regime A in training,
/// regime B (3x amplitude, sawtooth pulses) held out as OOD, and a
/// 20-experience deployment stream shifting A -> C -> D.
RunConfig default_run_config();

/// Parses JSON on top of default_run_config(). Throws ConfigError.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Fully resolved configuration as pretty JSON (stable key order).
std::string format_run_config(const RunConfig& config);

}  // namespace weldood
