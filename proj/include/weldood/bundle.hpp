#pragma once

// The trained pipeline versioned as one unit: normaliser statistics, VQ-VAE
// (encoder, codebook, decoder) and the causal transformer with its heads.

#include "weldood/ar_model.hpp"
#include "weldood/signal.hpp"
#include "weldood/vq_codec.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace weldood {

inline constexpr std::uint32_t kBundleFormatVersion = 1;

struct ModelBundle {
  ChannelStats normalizer;
  VqVae codec;
  ArTransformer transformer;

  /// Applies the bundle normaliser unless the batch is already normalised
  /// with identical statistics. Throws DataError for foreign statistics.
  CycleBatch normalize(const CycleBatch& batch) const;
};

/// Per-cycle intermediate results of the encode/quantise/decode path.
struct CycleAnalysis {
  LatentSequence latents;
  Quantized quantized;
  double s_recon = 0.0;
};

/// Runs encode -> quantize -> decode on every cycle of a normalised batch.
std::vector<CycleAnalysis> analyze(const ModelBundle& bundle, const CycleBatch& normalized);

/// Token sequences of a normalised batch.
std::vector<TokenSequence> tokenize(const ModelBundle& bundle, const CycleBatch& normalized);

/// Labeled token sequences for transformer training (all cycles must be labelled).
std::vector<LabeledSequence> labeled_sequences(const ModelBundle& bundle, const CycleBatch& normalized);

struct PipelineTrainResult {
  ModelBundle bundle;
  std::vector<VqEpochRecord> vq_trace;
  std::vector<EpochRecord> ar_history;
};

/// Fits the normaliser on `train`, trains the VQ-VAE, tokenises and trains the
/// transformer. Raw (unnormalised) batches in; deterministic per seed. The
/// transformer context length is raised to fit T + 1 if needed and
/// `ar.vocab` is overwritten with the codebook size.
PipelineTrainResult train_pipeline(const CycleBatch& train, const CycleBatch& val, const VqConfig& vq, ArConfig ar,
                                   std::uint64_t seed);

/// Binary container: magic, format version, configs, normaliser, and every
/// parameter matrix as raw little-endian doubles (bit-exact round trip).
void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_bundle(const std::filesystem::path& path);
std::string serialize_bundle(const ModelBundle& bundle);
ModelBundle deserialize_bundle(const std::string& bytes);

}  // namespace weldood
