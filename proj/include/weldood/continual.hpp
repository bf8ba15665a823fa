#pragma once

// Deployment simulation: a stream of experiences from evolving process
// regimes, three adaptation strategies, OOD-gated triggering, and label-cost
// accounting. Each experience is evaluated before any update it triggers.

#include "weldood/bundle.hpp"
#include "weldood/ood_scoring.hpp"
#include "weldood/signal.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace weldood {

struct Experience {
  int index = 0;
  CycleBatch batch;
  std::string regime_tag;
};

/// Experiences in schedule order; block i contributes schedule[i].second
/// experiences generated from schedule[i].first.
std::vector<Experience> build_stream(const std::vector<std::pair<ProcessParams, int>>& schedule,
                                     int cycles_per_experience, std::uint64_t seed);

/// Fixed-capacity store of labelled cycles with reservoir insertion.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::uint64_t seed);

  void insert(const CycleBatch& batch);
  /// Up to n cycles drawn without replacement.
  CycleBatch sample(std::size_t n, std::mt19937_64& rng) const;

  std::size_t size() const { return cycles_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t seen() const { return seen_; }
  const std::vector<WeldCycle>& cycles() const { return cycles_; }

 private:
  std::size_t capacity_;
  std::size_t seen_ = 0;
  std::vector<WeldCycle> cycles_;
  std::mt19937_64 rng_;
};

enum class Strategy { kNoCl, kReplayAlways, kOodReplay };
std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& name);

/// Which parameters a replay update touches. The VQ-VAE stays frozen in all
/// three: the whole transformer, its final LN plus both output heads, or the
/// final LN plus the class head.
enum class UpdateScope { kTransformer, kHeads, kClassifier };
std::string to_string(UpdateScope s);
UpdateScope parse_update_scope(const std::string& name);

struct UpdateConfig {
  int epochs = 3;
  double buffer_mix = 0.5;  ///< fraction of each update set drawn from the buffer
  std::size_t buffer_capacity = 2000;
  double learning_rate = 1e-3;
  int batch_size = 16;
  UpdateScope scope = UpdateScope::kTransformer;

  void validate() const;
};

/// True iff the fraction of scores >= theta reaches q. Requires q in (0, 1].
bool trigger_decision(std::span<const double> scores, double theta, double q);

/// Fine-tunes a copy of `bundle` on the new labelled data mixed with buffer
/// samples at `buffer_mix`, then inserts the new data into the buffer.
/// With kTransformer and kHeads each epoch runs one next-token and one
/// classification pass over the scoped parameters; with kClassifier only the
/// classification pass runs.
ModelBundle replay_update(const ModelBundle& bundle, const CycleBatch& new_data, ReplayBuffer& buffer,
                          const UpdateConfig& config, std::uint64_t seed);

struct DeploymentConfig {
  double trigger_fraction = 0.1;  ///< q
  UpdateConfig update;
};

struct ExperienceRecord {
  int index = 0;
  std::string regime_tag;
  double f1 = 0.0;
  double accuracy = 0.0;
  bool triggered = false;
  double flagged_fraction = 0.0;
  double mean_score = 0.0;
  std::size_t labels_consumed_cumulative = 0;
};

struct DeploymentReport {
  Strategy strategy = Strategy::kNoCl;
  ScoreKind method = ScoreKind::kArNll;
  double theta = 0.0;
  UpdateScope scope = UpdateScope::kTransformer;
  std::vector<ExperienceRecord> records;

  std::size_t trigger_count() const;
  std::size_t labels_consumed() const;
  /// Mean F1 over the last n experiences.
  double tail_mean_f1(std::size_t n) const;
};

/// Runs one strategy over the stream. `history` seeds the replay buffer
/// (the initial training data remains accessible). Errors raised while
/// scoring or updating are rethrown with the experience index prepended.
DeploymentReport run_deployment(Strategy strategy, const std::vector<Experience>& stream, const ModelBundle& initial,
                                const ScoreMethod& method, double theta, const CycleBatch& history,
                                const DeploymentConfig& config, std::uint64_t seed);

/// 1 - labels(ood_replay) / labels(replay_always). Throws UndefinedMetricError
/// when the replay run consumed no labels, DataError on stream-length mismatch.
double label_savings(const DeploymentReport& ood_replay, const DeploymentReport& replay_always);

}  // namespace weldood
