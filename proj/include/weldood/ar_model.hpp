#pragma once

// Causal transformer over codebook tokens with two heads: a next-token head
// (autoregressive likelihood) and a mean-pooled binary quality classifier.
//
// The input to the trunk is [BOS, z_1, ..., z_T] where BOS is the extra
// vocabulary entry K. Output row t (0-based) of the next-token head is the
// distribution p(z_{t+1} | z_1..z_t); row 0 therefore conditions on BOS only.

#include "weldood/autograd.hpp"
#include "weldood/vq_codec.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace weldood {

struct ArConfig {
  int vocab = 64;  ///< K; must match the codebook
  int context_length = 16;
  int layers = 2;
  int heads = 2;
  int model_dim = 64;
  int ffn_dim = 128;
  int class_count = 2;
  double ar_learning_rate = 1e-3;
  double cls_learning_rate = 1e-3;
  int batch_size = 16;
  int ar_epochs = 30;
  int cls_interval = 10;            ///< classification block after every n-th AR epoch
  int cls_epochs_per_interval = 2;
  int finetune_epochs = 5;

  void validate() const;
  int bos_token() const { return vocab; }
};

struct ClassPrediction {
  std::array<double, 2> probabilities{0.5, 0.5};
  int predicted_label = 0;
};

/// Trunk outputs for one sequence.
struct ArForward {
  ad::Var embedded;      ///< (T+1) x d input embeddings (token + position)
  ad::Var hidden;        ///< (T+1) x d after the final layer norm
  ad::Var ar_logits;     ///< (T+1) x K, row t is the distribution of tokens[t]
  ad::Var pooled;        ///< 1 x d mean of hidden rows
  ad::Var class_logits;  ///< 1 x 2
};

class ArTransformer {
 public:
  ArTransformer() = default;
  ArTransformer(const ArConfig& config, std::uint64_t seed);

  const ArConfig& config() const { return config_; }

  /// Runs the trunk on [BOS, tokens...]. When `embedding_override` is given it
  /// replaces the token+position embedding (used for input perturbation).
  ArForward forward(ad::Graph& g, std::span<const int> tokens, const ad::Matrix* embedding_override = nullptr);

  /// Token + position embedding of [BOS, tokens...].
  ad::Matrix embed(std::span<const int> tokens) const;

  std::vector<ad::Param*> parameters();
  std::vector<const ad::Param*> parameters() const;
  /// Parameters touched by classification-only updates (final LN + class head).
  std::vector<ad::Param*> classifier_parameters();
  /// Final LN plus both output heads.
  std::vector<ad::Param*> head_parameters();

  /// Throws DataError for tokens outside [0, K) or sequences longer than the
  /// context allows.
  void check_tokens(std::span<const int> tokens, std::size_t max_len) const;

 private:
  struct Layer {
    ad::Param ln1_g, ln1_b, wq, wk, wv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
  };
  ArConfig config_;
  ad::Param tok_emb_, pos_emb_;
  std::vector<Layer> layers_;
  ad::Param lnf_g_, lnf_b_, head_w_, head_b_, cls_w_, cls_b_;
};

/// p(z_{|prefix|+1} | prefix) over the K codebook tokens.
ad::RowVector next_token_distribution(const ArTransformer& model, std::span<const int> prefix);

/// -(1/T) * sum_t ln p(z_t | z_<t), with z_1 conditioned on BOS only.
double sequence_nll(const ArTransformer& model, std::span<const int> tokens);

ClassPrediction classify(const ArTransformer& model, std::span<const int> tokens);

/// Mean-pooled final hidden state (the classifier's pre-logit features).
ad::RowVector pooled_features(const ArTransformer& model, std::span<const int> tokens);

struct LabeledSequence {
  std::vector<int> tokens;
  int label = 0;
};

enum class EpochPhase { kAutoregressive, kClassification, kFinetune };
std::string to_string(EpochPhase phase);

struct EpochRecord {
  int index = 0;     ///< 1-based position in the schedule
  EpochPhase phase = EpochPhase::kAutoregressive;
  int ar_epoch = 0;  ///< AR epochs completed when this record was written
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

/// The epoch schedule alone: ar_epochs AR epochs with cls_epochs_per_interval
/// classification epochs after every cls_interval-th, then finetune_epochs.
std::vector<EpochPhase> training_schedule(const ArConfig& config);

struct ArTrainResult {
  ArTransformer model;
  std::vector<EpochRecord> history;
};

/// Executes training_schedule() exactly. Deterministic per seed. Throws
/// TrainingError on a non-finite loss.
ArTrainResult train_joint(const std::vector<LabeledSequence>& train, const std::vector<LabeledSequence>& val,
                          const ArConfig& config, std::uint64_t seed);

/// One pass over `data` in minibatches, optimising the AR or the
/// classification objective. Returns the mean training loss.
double run_epoch(ArTransformer& model, ad::Adam& optimizer, const std::vector<LabeledSequence>& data,
                 bool autoregressive, int batch_size, std::mt19937_64& rng);

/// Mean AR (or classification) loss and classification accuracy on `data`.
struct EvalResult {
  double ar_loss = 0.0;
  double cls_loss = 0.0;
  double accuracy = 0.0;
};
EvalResult evaluate(const ArTransformer& model, const std::vector<LabeledSequence>& data);

}  // namespace weldood
