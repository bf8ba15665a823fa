#pragma once

// OOD scorers. Every score is oriented so that higher means "more likely
// out of distribution"; confidence-based baselines are flipped as 1 - conf.

#include "weldood/ar_model.hpp"
#include "weldood/bundle.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace weldood {

enum class ScoreKind { kArNll, kRecon, kQuant, kMsp, kOdin, kMahalanobis };

std::string to_string(ScoreKind kind);
ScoreKind parse_score_kind(const std::string& name);
std::vector<ScoreKind> all_score_kinds();

/// Class-conditional Gaussians with a shared, ridge-regularised covariance.
struct GaussianStats {
  Matrix means;       ///< C x D_f
  Matrix covariance;  ///< D_f x D_f, ridge included
  Matrix precision;   ///< inverse of covariance
  double ridge = 0.0;
};

inline constexpr double kDefaultRidgeScale = 1e-4;

/// Shared covariance = pooled within-class scatter / (n - C) + ridge * I with
/// ridge = ridge_scale * trace(scatter / (n - C)) / D_f. Throws DataError
/// when a class has fewer than two samples and UndefinedMetricError when the
/// regularised covariance is not numerically positive definite.
GaussianStats fit_mahalanobis(const std::vector<ad::RowVector>& features, const std::vector<int>& labels,
                              double ridge_scale = kDefaultRidgeScale);

/// Minimum over classes of the Mahalanobis distance (not squared).
double mahalanobis_score(const GaussianStats& stats, const ad::RowVector& feature);

struct ScoreMethod {
  ScoreKind kind = ScoreKind::kArNll;
  double odin_temperature = 1000.0;
  double odin_epsilon = 0.0014;
  std::optional<GaussianStats> gaussian;  ///< required for kMahalanobis

  void validate() const;
};

/// 1 - max class probability.
double msp_score(const ClassPrediction& prediction);

/// ODIN on the transformer. The discrete tokens are mapped to their input
/// embeddings, which are shifted by -epsilon * sign(grad of the temperature-
/// scaled cross-entropy w.r.t. the predicted class); the score is 1 - max of
/// the temperature-scaled softmax at the shifted input.
double odin_score(const ArTransformer& model, std::span<const int> tokens, double temperature, double epsilon);

/// One score per cycle. Raw batches are normalised with the bundle's
/// statistics first.
std::vector<double> score_batch(const ScoreMethod& method, const ModelBundle& bundle, const CycleBatch& batch);

/// Pooled pre-logit features for every cycle (the Mahalanobis feature space).
std::vector<ad::RowVector> batch_features(const ModelBundle& bundle, const CycleBatch& batch);

/// Mahalanobis stats fitted on the pooled features of a labelled batch.
GaussianStats fit_mahalanobis(const ModelBundle& bundle, const CycleBatch& labelled,
                              double ridge_scale = kDefaultRidgeScale);

/// CSV with header cycle_id,method,score.
std::string format_scores_csv(const CycleBatch& batch, ScoreKind kind, const std::vector<double>& scores);

}  // namespace weldood
