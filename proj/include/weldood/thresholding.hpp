#pragma once

// ROC construction over "misclassified vs correct" validation samples and
// Youden-optimal threshold selection. A score >= theta flags a sample.

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace weldood {

inline constexpr double kMinusInfinity = -std::numeric_limits<double>::infinity();
inline constexpr double kPlusInfinity = std::numeric_limits<double>::infinity();

struct RocPoint {
  double theta = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
};

/// Points in increasing theta: -inf sentinel, every distinct score, +inf sentinel.
struct RocCurve {
  std::vector<RocPoint> points;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

struct ThresholdDecision {
  double theta = kPlusInfinity;
  double j_statistic = 0.0;
  RocCurve curve;
};

struct CorrectnessPartition {
  std::vector<std::size_t> positive;  ///< misclassified indices
  std::vector<std::size_t> negative;  ///< correctly classified indices

  /// True when one side is empty; a ROC cannot be built from it.
  bool degenerate() const { return positive.empty() || negative.empty(); }
  std::vector<bool> is_positive(std::size_t n) const;
};

/// Throws DataError on length mismatch or empty input.
CorrectnessPartition partition_by_correctness(std::span<const int> predictions, std::span<const int> labels);

/// Exact counting at every distinct score. Throws UndefinedMetricError when
/// either class is empty.
RocCurve roc_curve(std::span<const double> scores, const std::vector<bool>& is_positive);

/// argmax of TPR - FPR; ties resolve to the smallest theta.
ThresholdDecision youden_threshold(const RocCurve& curve);

std::vector<bool> flag_ood(std::span<const double> scores, double theta);

/// The full four-stage procedure on validation data: partition by
/// correctness, take the supplied scores, build the ROC, pick Youden's theta.
ThresholdDecision fit_threshold(std::span<const double> scores, std::span<const int> predictions,
                                std::span<const int> labels);

/// JSON audit record: method, theta, j, and every curve point. Infinite
/// thresholds are written as the strings "-inf" / "inf".
std::string format_threshold_json(const std::string& method, const ThresholdDecision& decision);
ThresholdDecision parse_threshold_json(const std::string& text, std::string* method = nullptr);

}  // namespace weldood
