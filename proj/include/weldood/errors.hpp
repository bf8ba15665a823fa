#pragma once

#include <stdexcept>
#include <string>

namespace weldood {

/// Invalid generator, model, or run parameters.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or missing input data (CSV rows, empty batches, shape mismatches).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A quantity that is mathematically undefined for the given input,
/// e.g. a degenerate ROC or a zero denominator in the OOD-Score.
class UndefinedMetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss during optimisation.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& phase, int epoch, const std::string& what)
      : std::runtime_error(what + " (phase " + phase + ", epoch " + std::to_string(epoch) + ")"),
        phase_(phase),
        epoch_(epoch),
        detail_(what) {}

  const std::string& phase() const noexcept { return phase_; }
  int epoch() const noexcept { return epoch_; }
  /// The message without the phase/epoch suffix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string phase_;
  int epoch_;
  std::string detail_;
};

/// Process exit codes used by the command-line tool.
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitDivergence = 4;

}  // namespace weldood
