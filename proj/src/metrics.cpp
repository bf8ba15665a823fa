#include "weldood/metrics.hpp"

#include "weldood/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace weldood {

std::string to_string(MetricKind kind) { return kind == MetricKind::kAccuracy ? "accuracy" : "f1"; }

Confusion confusion(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw DataError("metric: predictions and labels differ in length");
  if (predictions.empty()) throw DataError("metric: empty input");
  Confusion c;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool p = predictions[i] == 1;
    const bool l = labels[i] == 1;
    if (p && l) ++c.tp;
    else if (p) ++c.fp;
    else if (l) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  const Confusion c = confusion(predictions, labels);
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(predictions.size());
}

double f1(std::span<const int> predictions, std::span<const int> labels) {
  const Confusion c = confusion(predictions, labels);
  // 2TP / (2TP + FP + FN) equals the harmonic mean of precision and recall.
  const std::size_t denom = 2 * c.tp + c.fp + c.fn;
  return c.tp == 0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

double metric(MetricKind kind, std::span<const int> predictions, std::span<const int> labels) {
  return kind == MetricKind::kAccuracy ? accuracy(predictions, labels) : f1(predictions, labels);
}

double ood_score(const OodScoreInputs& in) {
  if (!(in.beta > 0.0)) throw ConfigError("ood_score: beta must be > 0");
  if (!std::isfinite(in.id_value) || !std::isfinite(in.ood_value)) throw DataError("ood_score: non-finite input");
  if (in.id_value == 0.0) {
    throw UndefinedMetricError("ood_score: ID performance is 0, denominator vanishes");
  }
  const double denom = in.beta * in.id_value + in.id_value;
  return (in.beta * in.id_value + in.id_value - in.ood_value) / denom;
}

double auroc(std::span<const double> scores, const std::vector<bool>& is_positive) {
  if (scores.size() != is_positive.size()) throw DataError("auroc: length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mann-Whitney via midranks.
  double rank_sum = 0.0;
  std::size_t positives = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (is_positive[order[k]]) {
        rank_sum += midrank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) throw UndefinedMetricError("auroc needs both classes");
  const double p = static_cast<double>(positives);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

std::vector<int> abstain_as_error(std::span<const int> predictions, std::span<const int> labels,
                                  const std::vector<bool>& flagged) {
  if (predictions.size() != labels.size() || flagged.size() != labels.size()) {
    throw DataError("abstain_as_error: length mismatch");
  }
  std::vector<int> out(predictions.begin(), predictions.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (flagged[i]) out[i] = 1 - labels[i];
  }
  return out;
}

}  // namespace weldood
