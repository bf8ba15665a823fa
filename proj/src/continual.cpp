#include "weldood/continual.hpp"

#include "weldood/errors.hpp"
#include "weldood/metrics.hpp"
#include "weldood/thresholding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace weldood {

std::vector<Experience> build_stream(const std::vector<std::pair<ProcessParams, int>>& schedule,
                                     int cycles_per_experience, std::uint64_t seed) {
  if (schedule.empty()) throw ConfigError("build_stream: empty schedule");
  if (cycles_per_experience < 1) throw ConfigError("build_stream: cycles_per_experience must be >= 1");
  std::vector<Experience> stream;
  for (const auto& [params, count] : schedule) {
    params.validate();
    if (count < 1) throw ConfigError("build_stream: experience count must be >= 1");
    for (int i = 0; i < count; ++i) {
      Experience e;
      e.index = static_cast<int>(stream.size());
      e.batch = generate_cycles(params, cycles_per_experience, seed * 1000003ULL + static_cast<std::uint64_t>(e.index));
      e.regime_tag = params.regime_tag();
      stream.push_back(std::move(e));
    }
  }
  return stream;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {
  if (capacity_ == 0) throw ConfigError("replay buffer capacity must be >= 1");
}

void ReplayBuffer::insert(const CycleBatch& batch) {
  for (const WeldCycle& c : batch.cycles) {
    ++seen_;
    if (cycles_.size() < capacity_) {
      cycles_.push_back(c);
    } else {
      std::uniform_int_distribution<std::size_t> slot(0, seen_ - 1);
      const std::size_t j = slot(rng_);
      if (j < capacity_) cycles_[j] = c;
    }
  }
}

CycleBatch ReplayBuffer::sample(std::size_t n, std::mt19937_64& rng) const {
  std::vector<std::size_t> idx(cycles_.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  CycleBatch out;
  for (std::size_t i = 0; i < std::min(n, idx.size()); ++i) out.cycles.push_back(cycles_[idx[i]]);
  return out;
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kNoCl:
      return "no_cl";
    case Strategy::kReplayAlways:
      return "replay";
    case Strategy::kOodReplay:
      return "ood_replay";
  }
  return "no_cl";
}

Strategy parse_strategy(const std::string& name) {
  for (Strategy s : {Strategy::kNoCl, Strategy::kReplayAlways, Strategy::kOodReplay}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown strategy '" + name + "'");
}

std::string to_string(UpdateScope s) {
  switch (s) {
    case UpdateScope::kTransformer:
      return "transformer";
    case UpdateScope::kHeads:
      return "heads";
    case UpdateScope::kClassifier:
      return "classifier";
  }
  return "?";
}

UpdateScope parse_update_scope(const std::string& name) {
  if (name == "transformer") return UpdateScope::kTransformer;
  if (name == "heads") return UpdateScope::kHeads;
  if (name == "classifier") return UpdateScope::kClassifier;
  throw ConfigError("unknown update scope '" + name + "'");
}

void UpdateConfig::validate() const {
  if (epochs < 1) throw ConfigError("update.epochs must be >= 1");
  if (!(buffer_mix >= 0.0 && buffer_mix < 1.0)) throw ConfigError("update.buffer_mix must lie in [0, 1)");
  if (buffer_capacity < 1) throw ConfigError("update.buffer_capacity must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("update.learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("update.batch_size must be >= 1");
}

bool trigger_decision(std::span<const double> scores, double theta, double q) {
  if (!(q > 0.0 && q <= 1.0)) throw ConfigError("trigger fraction q must lie in (0, 1]");
  if (scores.empty()) throw DataError("trigger_decision: no scores");
  std::size_t flagged = 0;
  for (double s : scores) flagged += s >= theta ? 1 : 0;
  // Integer comparison avoids rounding at exact fractions such as 3/10 vs 0.3.
  return static_cast<double>(flagged) >= q * static_cast<double>(scores.size()) - 1e-12;
}

ModelBundle replay_update(const ModelBundle& bundle, const CycleBatch& new_data, ReplayBuffer& buffer,
                          const UpdateConfig& config, std::uint64_t seed) {
  config.validate();
  if (new_data.empty()) throw DataError("replay_update: no new data");
  std::mt19937_64 rng(seed);
  const auto want = static_cast<std::size_t>(
      std::llround(static_cast<double>(new_data.size()) * config.buffer_mix / (1.0 - config.buffer_mix)));
  CycleBatch mix = buffer.sample(want, rng);
  mix.cycles.insert(mix.cycles.end(), new_data.cycles.begin(), new_data.cycles.end());

  ModelBundle updated = bundle;
  const std::vector<LabeledSequence> data = labeled_sequences(updated, apply_normalizer(mix, updated.normalizer));
  ArTransformer& model = updated.transformer;
  if (config.scope != UpdateScope::kClassifier) {
    const std::vector<ad::Param*> scoped =
        config.scope == UpdateScope::kTransformer ? model.parameters() : model.head_parameters();
    ad::Adam ar_opt(scoped, ad::AdamOptions{.learning_rate = config.learning_rate});
    ad::Adam cls_opt(scoped, ad::AdamOptions{.learning_rate = config.learning_rate});
    for (int e = 1; e <= config.epochs; ++e) {
      if (!std::isfinite(run_epoch(model, ar_opt, data, true, config.batch_size, rng))) {
        throw TrainingError("replay-ar", e, "non-finite loss during replay update");
      }
      if (!std::isfinite(run_epoch(model, cls_opt, data, false, config.batch_size, rng))) {
        throw TrainingError("replay-cls", e, "non-finite loss during replay update");
      }
    }
  } else {
    ad::Adam cls_opt(model.classifier_parameters(), ad::AdamOptions{.learning_rate = config.learning_rate});
    for (int e = 1; e <= config.epochs; ++e) {
      if (!std::isfinite(run_epoch(model, cls_opt, data, false, config.batch_size, rng))) {
        throw TrainingError("replay-cls", e, "non-finite loss during replay update");
      }
    }
  }
  buffer.insert(new_data);
  return updated;
}

std::size_t DeploymentReport::trigger_count() const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const ExperienceRecord& r) { return r.triggered; }));
}

std::size_t DeploymentReport::labels_consumed() const {
  return records.empty() ? 0 : records.back().labels_consumed_cumulative;
}

double DeploymentReport::tail_mean_f1(std::size_t n) const {
  if (records.empty() || n == 0) throw DataError("tail_mean_f1: empty report");
  n = std::min(n, records.size());
  double total = 0.0;
  for (std::size_t i = records.size() - n; i < records.size(); ++i) total += records[i].f1;
  return total / static_cast<double>(n);
}

DeploymentReport run_deployment(Strategy strategy, const std::vector<Experience>& stream, const ModelBundle& initial,
                                const ScoreMethod& method, double theta, const CycleBatch& history,
                                const DeploymentConfig& config, std::uint64_t seed) {
  config.update.validate();
  if (!(config.trigger_fraction > 0.0 && config.trigger_fraction <= 1.0)) {
    throw ConfigError("trigger fraction q must lie in (0, 1]");
  }
  DeploymentReport report;
  report.strategy = strategy;
  report.method = method.kind;
  report.theta = theta;
  report.scope = config.update.scope;

  ModelBundle model = initial;
  ReplayBuffer buffer(config.update.buffer_capacity, seed ^ 0x5bd1e995ULL);
  if (!history.empty()) buffer.insert(history);
  std::size_t labels = 0;

  for (const Experience& exp : stream) {
    const std::string where = "experience " + std::to_string(exp.index) + ": ";
    try {
      ExperienceRecord rec;
      rec.index = exp.index;
      rec.regime_tag = exp.regime_tag;
      const CycleBatch normalized = apply_normalizer(exp.batch, model.normalizer);
      const std::vector<TokenSequence> tokens = tokenize(model, normalized);
      std::vector<int> predictions;
      predictions.reserve(tokens.size());
      for (const TokenSequence& t : tokens) predictions.push_back(classify(model.transformer, t.tokens).predicted_label);
      const std::vector<int> truth = exp.batch.labels();
      rec.f1 = f1(predictions, truth);
      rec.accuracy = accuracy(predictions, truth);

      const std::vector<double> scores = score_batch(method, model, normalized);
      rec.mean_score = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
      const std::vector<bool> flags = flag_ood(scores, theta);
      rec.flagged_fraction =
          static_cast<double>(std::count(flags.begin(), flags.end(), true)) / static_cast<double>(flags.size());

      switch (strategy) {
        case Strategy::kNoCl:
          rec.triggered = false;
          break;
        case Strategy::kReplayAlways:
          rec.triggered = true;
          break;
        case Strategy::kOodReplay:
          rec.triggered = trigger_decision(scores, theta, config.trigger_fraction);
          break;
      }
      if (rec.triggered) {
        labels += exp.batch.size();
        model = replay_update(model, exp.batch, buffer, config.update,
                              seed * 7919ULL + static_cast<std::uint64_t>(exp.index));
      }
      rec.labels_consumed_cumulative = labels;
      report.records.push_back(std::move(rec));
    } catch (const TrainingError& e) {
      throw TrainingError(e.phase(), e.epoch(), where + e.detail());
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    } catch (const UndefinedMetricError& e) {
      throw UndefinedMetricError(where + e.what());
    }
  }
  return report;
}

double label_savings(const DeploymentReport& ood_replay, const DeploymentReport& replay_always) {
  if (ood_replay.records.size() != replay_always.records.size()) {
    throw DataError("label_savings: reports cover different stream lengths");
  }
  const std::size_t replay_labels = replay_always.labels_consumed();
  if (replay_labels == 0) throw UndefinedMetricError("label_savings: replay run consumed no labels");
  return 1.0 - static_cast<double>(ood_replay.labels_consumed()) / static_cast<double>(replay_labels);
}

}  // namespace weldood
