#pragma once

// Vector-quantised autoencoder over two-channel cycles.
//
// Encoder: 3-tap convolution (2 -> conv_channels) + GELU, a strided patch
// convolution (kernel = stride = downsample) + GELU, then a per-position
// linear map to the embedding dimension. The decoder mirrors it. Quantisation
// is nearest-neighbour against a learned codebook with straight-through
// gradients; codebook and commitment terms follow the usual VQ-VAE recipe.

#include "weldood/autograd.hpp"
#include "weldood/signal.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace weldood {

using ad::Matrix;

struct VqConfig {
  int codebook_size = 64;
  int embedding_dim = 16;
  int downsample = 8;
  int conv_channels = 8;
  int hidden = 32;
  double commitment_beta = 0.25;
  int epochs = 30;
  int batch_size = 16;
  double learning_rate = 2e-3;

  void validate() const;
};

struct Codebook {
  Matrix vectors;  ///< K x D
  std::vector<std::int64_t> usage_counts;

  int size() const { return static_cast<int>(vectors.rows()); }
  int dim() const { return static_cast<int>(vectors.cols()); }
};

struct LatentSequence {
  Matrix vectors;  ///< M x D
};

struct TokenSequence {
  std::vector<int> tokens;

  std::size_t size() const { return tokens.size(); }
};

struct Quantized {
  TokenSequence tokens;
  LatentSequence quantized;
  double s_quant = 0.0;
};

/// Cycle samples as an N x 2 matrix (column 0 current, column 1 voltage).
Matrix cycle_matrix(const WeldCycle& cycle);

/// Nearest-codebook lookup; ties resolve to the lowest index. s_quant is the
/// mean over positions of the squared L2 distance to the selected code.
Quantized quantize(const LatentSequence& latents, const Codebook& codebook);

/// (1/N) * sum_i ||x_i - x_hat_i||^2 over the two channels.
double reconstruction_error(const WeldCycle& x, const WeldCycle& x_hat);

class VqVae {
 public:
  VqVae() = default;
  VqVae(const VqConfig& config, std::uint64_t seed);

  const VqConfig& config() const { return config_; }

  /// M = ceil(N / downsample). Throws DataError for N < downsample.
  int latent_length(std::size_t cycle_length) const;

  LatentSequence encode(const WeldCycle& normalized) const;
  /// Reconstruction of length `cycle_length` from M quantised rows.
  WeldCycle decode(const LatentSequence& quantized, std::size_t cycle_length) const;

  const Codebook& codebook() const { return codebook_; }
  Codebook& codebook() { return codebook_; }

  // Graph-level building blocks (used by training and gradient checks).
  ad::Var encode_graph(ad::Graph& g, const Matrix& x);
  ad::Var decode_graph(ad::Graph& g, ad::Var quantized, std::size_t cycle_length);
  /// Full training objective for one cycle: reconstruction MSE + codebook
  /// term + beta * commitment term. With `bypass_quantization` the quantiser
  /// is replaced by the identity so only the encoder/decoder path remains.
  ad::Var loss_graph(ad::Graph& g, const Matrix& x, bool bypass_quantization, std::vector<int>* tokens_out = nullptr);

  std::vector<ad::Param*> parameters();
  std::vector<const ad::Param*> parameters() const;
  /// Encoder + decoder parameters without the codebook.
  std::vector<ad::Param*> autoencoder_parameters();

  /// Copies the Param codebook into the public Codebook view.
  void sync_codebook();

 private:
  VqConfig config_;
  ad::Param conv_in_w_, conv_in_b_;
  ad::Param patch_w_, patch_b_;
  ad::Param enc_out_w_, enc_out_b_;
  ad::Param dec_in_w_, dec_in_b_;
  ad::Param dec_patch_w_, dec_patch_b_;
  ad::Param conv_out_w_, conv_out_b_;
  ad::Param codebook_param_;
  Codebook codebook_;

  friend class VqVaeTrainer;
};

struct VqEpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_recon = 0.0;
  double val_recon = 0.0;
};

struct VqTrainResult {
  VqVae model;
  std::vector<VqEpochRecord> trace;
};

/// Trains on z-scored batches. Deterministic per seed. Throws TrainingError
/// on a non-finite loss.
VqTrainResult train_vqvae(const CycleBatch& train, const CycleBatch& val, const VqConfig& config, std::uint64_t seed);

}  // namespace weldood
