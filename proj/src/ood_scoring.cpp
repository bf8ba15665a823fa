#include "weldood/ood_scoring.hpp"

#include "weldood/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace weldood {

std::string to_string(ScoreKind kind) {
  switch (kind) {
    case ScoreKind::kArNll:
      return "ar_nll";
    case ScoreKind::kRecon:
      return "recon";
    case ScoreKind::kQuant:
      return "quant";
    case ScoreKind::kMsp:
      return "msp";
    case ScoreKind::kOdin:
      return "odin";
    case ScoreKind::kMahalanobis:
      return "mahalanobis";
  }
  return "ar_nll";
}

ScoreKind parse_score_kind(const std::string& name) {
  for (ScoreKind k : all_score_kinds()) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown score method '" + name + "'");
}

std::vector<ScoreKind> all_score_kinds() {
  return {ScoreKind::kArNll, ScoreKind::kRecon, ScoreKind::kQuant,
          ScoreKind::kMsp,   ScoreKind::kOdin,  ScoreKind::kMahalanobis};
}

void ScoreMethod::validate() const {
  if (!(odin_temperature > 0.0)) throw ConfigError("odin temperature must be > 0");
  if (!(odin_epsilon >= 0.0)) throw ConfigError("odin epsilon must be >= 0");
}

GaussianStats fit_mahalanobis(const std::vector<ad::RowVector>& features, const std::vector<int>& labels,
                              double ridge_scale) {
  if (features.size() != labels.size()) throw DataError("fit_mahalanobis: features and labels differ in length");
  if (features.empty()) throw DataError("fit_mahalanobis: no samples");
  if (!(ridge_scale >= 0.0)) throw ConfigError("ridge scale must be >= 0");
  const Eigen::Index dim = features.front().size();
  constexpr int kClasses = 2;
  GaussianStats s;
  s.means = Matrix::Zero(kClasses, dim);
  std::array<int, kClasses> counts{0, 0};
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].size() != dim) throw DataError("fit_mahalanobis: ragged feature vectors");
    if (labels[i] != 0 && labels[i] != 1) throw DataError("fit_mahalanobis: labels must be 0 or 1");
    s.means.row(labels[i]) += features[i];
    ++counts[static_cast<std::size_t>(labels[i])];
  }
  for (int c = 0; c < kClasses; ++c) {
    if (counts[static_cast<std::size_t>(c)] < 2) {
      throw DataError("fit_mahalanobis: class " + std::to_string(c) + " has fewer than 2 samples");
    }
    s.means.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
  }
  Matrix scatter = Matrix::Zero(dim, dim);
  for (std::size_t i = 0; i < features.size(); ++i) {
    const ad::RowVector d = features[i] - s.means.row(labels[i]);
    scatter.noalias() += d.transpose() * d;
  }
  const double dof = static_cast<double>(features.size()) - kClasses;
  s.covariance = scatter / dof;
  s.ridge = ridge_scale * s.covariance.trace() / static_cast<double>(dim);
  s.covariance.diagonal().array() += s.ridge;
  const Eigen::LLT<Matrix> llt(s.covariance);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-12)) {
    throw UndefinedMetricError("fit_mahalanobis: covariance is singular after ridge regularisation");
  }
  s.precision = llt.solve(Matrix::Identity(dim, dim));
  return s;
}

double mahalanobis_score(const GaussianStats& stats, const ad::RowVector& feature) {
  if (feature.size() != stats.means.cols()) throw DataError("mahalanobis_score: feature dimension mismatch");
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < stats.means.rows(); ++c) {
    const ad::RowVector d = feature - stats.means.row(c);
    const double sq = (d * stats.precision * d.transpose())(0, 0);
    best = std::min(best, std::sqrt(std::max(sq, 0.0)));
  }
  return best;
}

double msp_score(const ClassPrediction& prediction) {
  return 1.0 - std::max(prediction.probabilities[0], prediction.probabilities[1]);
}

double odin_score(const ArTransformer& model, std::span<const int> tokens, double temperature, double epsilon) {
  if (!(temperature > 0.0) || !(epsilon >= 0.0)) throw ConfigError("odin: temperature > 0 and epsilon >= 0 required");
  auto& m = const_cast<ArTransformer&>(model);  // forward passes only read parameters
  Matrix embedded = model.embed(tokens);
  if (epsilon > 0.0) {
    ad::Graph g;
    const ArForward f = m.forward(g, tokens, &embedded);
    const Matrix& z = f.class_logits.value();
    const int predicted[1] = {z(0, 1) > z(0, 0) ? 1 : 0};
    ad::Var loss = ad::cross_entropy(f.class_logits * (1.0 / temperature), predicted);
    g.backward(loss);
    const Matrix& grad = f.embedded.grad();
    embedded -= epsilon * grad.unaryExpr([](double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); });
  }
  ad::Graph g;
  const ArForward f = m.forward(g, tokens, &embedded);
  const ad::RowVector p = ad::softmax(f.class_logits.value().row(0) / temperature);
  return 1.0 - p.maxCoeff();
}

std::vector<ad::RowVector> batch_features(const ModelBundle& bundle, const CycleBatch& batch) {
  const CycleBatch normalized = bundle.normalize(batch);
  std::vector<ad::RowVector> out;
  out.reserve(batch.size());
  for (const TokenSequence& t : tokenize(bundle, normalized)) {
    out.push_back(pooled_features(bundle.transformer, t.tokens));
  }
  return out;
}

GaussianStats fit_mahalanobis(const ModelBundle& bundle, const CycleBatch& labelled, double ridge_scale) {
  return fit_mahalanobis(batch_features(bundle, labelled), labelled.labels(), ridge_scale);
}

std::vector<double> score_batch(const ScoreMethod& method, const ModelBundle& bundle, const CycleBatch& batch) {
  method.validate();
  if (method.kind == ScoreKind::kMahalanobis && !method.gaussian) {
    throw ConfigError("mahalanobis scoring requires fitted Gaussian statistics");
  }
  const CycleBatch normalized = bundle.normalize(batch);
  std::vector<double> scores;
  scores.reserve(batch.size());
  if (method.kind == ScoreKind::kRecon || method.kind == ScoreKind::kQuant) {
    for (const CycleAnalysis& a : analyze(bundle, normalized)) {
      scores.push_back(method.kind == ScoreKind::kRecon ? a.s_recon : a.quantized.s_quant);
    }
    return scores;
  }
  for (const TokenSequence& t : tokenize(bundle, normalized)) {
    switch (method.kind) {
      case ScoreKind::kArNll:
        scores.push_back(sequence_nll(bundle.transformer, t.tokens));
        break;
      case ScoreKind::kMsp:
        scores.push_back(msp_score(classify(bundle.transformer, t.tokens)));
        break;
      case ScoreKind::kOdin:
        scores.push_back(odin_score(bundle.transformer, t.tokens, method.odin_temperature, method.odin_epsilon));
        break;
      case ScoreKind::kMahalanobis:
        scores.push_back(mahalanobis_score(*method.gaussian, pooled_features(bundle.transformer, t.tokens)));
        break;
      default:
        break;
    }
  }
  return scores;
}

std::string format_scores_csv(const CycleBatch& batch, ScoreKind kind, const std::vector<double>& scores) {
  if (scores.size() != batch.size()) throw DataError("format_scores_csv: score count mismatch");
  std::string out = "cycle_id,method,score\n";
  const std::string name = to_string(kind);
  char buf[48];
  for (std::size_t i = 0; i < scores.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.9g", scores[i]);
    out += batch.cycles[i].cycle_id + "," + name + "," + buf + "\n";
  }
  return out;
}

}  // namespace weldood
