#include "weldood/thresholding.hpp"

#include "weldood/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace weldood {

std::vector<bool> CorrectnessPartition::is_positive(std::size_t n) const {
  std::vector<bool> out(n, false);
  for (std::size_t i : positive) out[i] = true;
  return out;
}

CorrectnessPartition partition_by_correctness(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw DataError("partition_by_correctness: length mismatch");
  if (predictions.empty()) throw DataError("partition_by_correctness: empty input");
  CorrectnessPartition p;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    (predictions[i] == labels[i] ? p.negative : p.positive).push_back(i);
  }
  return p;
}

RocCurve roc_curve(std::span<const double> scores, const std::vector<bool>& is_positive) {
  if (scores.size() != is_positive.size()) throw DataError("roc_curve: length mismatch");
  RocCurve curve;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw DataError("roc_curve: non-finite score");
    (is_positive[i] ? curve.positives : curve.negatives) += 1;
  }
  if (curve.positives == 0 || curve.negatives == 0) {
    throw UndefinedMetricError("degenerate ROC: need at least one positive and one negative sample");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  const double p = static_cast<double>(curve.positives);
  const double n = static_cast<double>(curve.negatives);
  curve.points.push_back(RocPoint{kMinusInfinity, 1.0, 1.0, curve.positives, curve.negatives});
  // Walk ascending scores; at each distinct value everything at or above it is flagged.
  std::size_t tp = curve.positives;
  std::size_t fp = curve.negatives;
  std::size_t i = 0;
  while (i < order.size()) {
    const double theta = scores[order[i]];
    curve.points.push_back(RocPoint{theta, static_cast<double>(tp) / p, static_cast<double>(fp) / n, tp, fp});
    while (i < order.size() && scores[order[i]] == theta) {
      (is_positive[order[i]] ? tp : fp) -= 1;
      ++i;
    }
  }
  curve.points.push_back(RocPoint{kPlusInfinity, 0.0, 0.0, 0, 0});
  return curve;
}

ThresholdDecision youden_threshold(const RocCurve& curve) {
  if (curve.points.empty()) throw UndefinedMetricError("youden_threshold: empty ROC curve");
  ThresholdDecision d;
  // Exact integer comparison of J * P * N so that equal J values tie exactly;
  // the first (smallest-theta) maximiser wins.
  const bool counted = curve.positives > 0 && curve.negatives > 0;
  long long best_key = std::numeric_limits<long long>::min();
  double best_j = -std::numeric_limits<double>::infinity();
  for (const RocPoint& pt : curve.points) {
    const double j = pt.tpr - pt.fpr;
    bool better = false;
    if (counted) {
      const long long key = static_cast<long long>(pt.true_positives) * static_cast<long long>(curve.negatives) -
                            static_cast<long long>(pt.false_positives) * static_cast<long long>(curve.positives);
      better = key > best_key;
      if (better) best_key = key;
    } else {
      better = j > best_j;
    }
    if (better) {
      best_j = j;
      d.theta = pt.theta;
    }
  }
  d.j_statistic = best_j;
  d.curve = curve;
  return d;
}

std::vector<bool> flag_ood(std::span<const double> scores, double theta) {
  std::vector<bool> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] >= theta;
  return out;
}

ThresholdDecision fit_threshold(std::span<const double> scores, std::span<const int> predictions,
                                std::span<const int> labels) {
  const CorrectnessPartition part = partition_by_correctness(predictions, labels);
  if (scores.size() != predictions.size()) throw DataError("fit_threshold: score count mismatch");
  return youden_threshold(roc_curve(scores, part.is_positive(scores.size())));
}

namespace {

nlohmann::json theta_json(double theta) {
  if (theta == kMinusInfinity) return "-inf";
  if (theta == kPlusInfinity) return "inf";
  return theta;
}

double theta_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "-inf") return kMinusInfinity;
    if (s == "inf") return kPlusInfinity;
    throw DataError("threshold json: bad theta '" + s + "'");
  }
  return j.get<double>();
}

}  // namespace

std::string format_threshold_json(const std::string& method, const ThresholdDecision& decision) {
  nlohmann::ordered_json j;
  j["method"] = method;
  j["theta"] = theta_json(decision.theta);
  j["j_statistic"] = decision.j_statistic;
  j["positives"] = decision.curve.positives;
  j["negatives"] = decision.curve.negatives;
  nlohmann::ordered_json pts = nlohmann::ordered_json::array();
  for (const RocPoint& p : decision.curve.points) {
    pts.push_back({{"theta", theta_json(p.theta)}, {"tpr", p.tpr}, {"fpr", p.fpr}});
  }
  j["curve"] = std::move(pts);
  return j.dump(2) + "\n";
}

ThresholdDecision parse_threshold_json(const std::string& text, std::string* method) {
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    ThresholdDecision d;
    d.theta = theta_from_json(j.at("theta"));
    d.j_statistic = j.at("j_statistic").get<double>();
    d.curve.positives = j.at("positives").get<std::size_t>();
    d.curve.negatives = j.at("negatives").get<std::size_t>();
    for (const auto& p : j.at("curve")) {
      RocPoint pt{theta_from_json(p.at("theta")), p.at("tpr").get<double>(), p.at("fpr").get<double>(), 0, 0};
      pt.true_positives = static_cast<std::size_t>(std::llround(pt.tpr * static_cast<double>(d.curve.positives)));
      pt.false_positives = static_cast<std::size_t>(std::llround(pt.fpr * static_cast<double>(d.curve.negatives)));
      d.curve.points.push_back(pt);
    }
    if (method != nullptr) *method = j.at("method").get<std::string>();
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("threshold json: ") + e.what());
  }
}

}  // namespace weldood
