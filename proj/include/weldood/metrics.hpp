#pragma once

#include <span>
#include <string>
#include <vector>

namespace weldood {

enum class MetricKind { kAccuracy, kF1 };

std::string to_string(MetricKind kind);

inline constexpr double kDefaultBeta = 0.5;

struct OodScoreInputs {
  double id_value = 0.0;   ///< ID performance in [0, 1]
  double ood_value = 0.0;  ///< OOD performance in [0, 1]
  double beta = kDefaultBeta;
};

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

/// Positive class is label 1 (satisfactory). Throws DataError on empty or
/// mismatched input.
Confusion confusion(std::span<const int> predictions, std::span<const int> labels);
double accuracy(std::span<const int> predictions, std::span<const int> labels);
/// Harmonic mean of precision and recall for label 1; 0 when both are 0.
double f1(std::span<const int> predictions, std::span<const int> labels);
double metric(MetricKind kind, std::span<const int> predictions, std::span<const int> labels);

/// (beta*ID + ID - OOD) / (beta*ID + ID). Negative when OOD > (1 + beta) * ID.
/// Throws UndefinedMetricError when id_value == 0.
double ood_score(const OodScoreInputs& inputs);

/// Probability that a random positive outscores a random negative, ties
/// counted as one half. Throws UndefinedMetricError when a class is empty.
double auroc(std::span<const double> scores, const std::vector<bool>& is_positive);

/// Predictions with every flagged sample replaced by the wrong label, i.e. a
/// rejected sample counts as an error of the deployed predictor.
std::vector<int> abstain_as_error(std::span<const int> predictions, std::span<const int> labels,
                                  const std::vector<bool>& flagged);

}  // namespace weldood
