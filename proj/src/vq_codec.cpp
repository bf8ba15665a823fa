#include "weldood/vq_codec.hpp"

#include "weldood/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace weldood {

using ad::Graph;
using ad::Param;
using ad::Var;

void VqConfig::validate() const {
  if (codebook_size < 2) throw ConfigError("vq.codebook_size must be >= 2");
  if (embedding_dim < 1) throw ConfigError("vq.embedding_dim must be >= 1");
  if (downsample < 1) throw ConfigError("vq.downsample must be >= 1");
  if (conv_channels < 1 || hidden < 1) throw ConfigError("vq layer widths must be >= 1");
  if (!(commitment_beta >= 0.0)) throw ConfigError("vq.commitment_beta must be >= 0");
  if (epochs < 0 || batch_size < 1) throw ConfigError("vq.epochs >= 0 and vq.batch_size >= 1 required");
  if (!(learning_rate > 0.0)) throw ConfigError("vq.learning_rate must be > 0");
}

Matrix cycle_matrix(const WeldCycle& cycle) {
  Matrix x(static_cast<Eigen::Index>(cycle.length()), kChannels);
  for (std::size_t t = 0; t < cycle.length(); ++t) {
    x(static_cast<Eigen::Index>(t), 0) = cycle.current[t];
    x(static_cast<Eigen::Index>(t), 1) = cycle.voltage[t];
  }
  return x;
}

namespace {

int nearest_code(const Matrix& codes, const Eigen::RowVectorXd& z, double* dist_out) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < codes.rows(); ++k) {
    const double d = (codes.row(k) - z).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  if (dist_out != nullptr) *dist_out = best_d;
  return best;
}

}  // namespace

Quantized quantize(const LatentSequence& latents, const Codebook& codebook) {
  if (latents.vectors.cols() != codebook.vectors.cols()) {
    throw DataError("quantize: latent dimension " + std::to_string(latents.vectors.cols()) +
                    " does not match codebook dimension " + std::to_string(codebook.vectors.cols()));
  }
  if (latents.vectors.rows() < 1 || codebook.vectors.rows() < 1) {
    throw DataError("quantize: empty latents or codebook");
  }
  Quantized q;
  const Eigen::Index m = latents.vectors.rows();
  q.tokens.tokens.resize(static_cast<std::size_t>(m));
  q.quantized.vectors.resize(m, latents.vectors.cols());
  double total = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    double d = 0.0;
    const int k = nearest_code(codebook.vectors, latents.vectors.row(j), &d);
    q.tokens.tokens[static_cast<std::size_t>(j)] = k;
    q.quantized.vectors.row(j) = codebook.vectors.row(k);
    total += d;
  }
  q.s_quant = total / static_cast<double>(m);
  return q;
}

double reconstruction_error(const WeldCycle& x, const WeldCycle& x_hat) {
  if (x.length() != x_hat.length() || x.voltage.size() != x_hat.voltage.size() || x.current.size() != x.voltage.size()) {
    throw DataError("reconstruction_error: length mismatch");
  }
  if (x.length() == 0) {
    throw DataError("reconstruction_error: empty cycle");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < x.length(); ++i) {
    const double dc = x.current[i] - x_hat.current[i];
    const double dv = x.voltage[i] - x_hat.voltage[i];
    total += dc * dc + dv * dv;
  }
  return total / static_cast<double>(x.length());
}

VqVae::VqVae(const VqConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const int c1 = config_.conv_channels;
  const int h = config_.hidden;
  const int d = config_.embedding_dim;
  const int ds = config_.downsample;
  auto zeros = [](int r, int c) { return Matrix::Zero(r, c); };
  conv_in_w_ = Param("vq.conv_in.w", ad::xavier(3 * kChannels, c1, rng));
  conv_in_b_ = Param("vq.conv_in.b", zeros(1, c1));
  patch_w_ = Param("vq.patch.w", ad::xavier(ds * c1, h, rng));
  patch_b_ = Param("vq.patch.b", zeros(1, h));
  enc_out_w_ = Param("vq.enc_out.w", ad::xavier(h, d, rng));
  enc_out_b_ = Param("vq.enc_out.b", zeros(1, d));
  dec_in_w_ = Param("vq.dec_in.w", ad::xavier(d, h, rng));
  dec_in_b_ = Param("vq.dec_in.b", zeros(1, h));
  dec_patch_w_ = Param("vq.dec_patch.w", ad::xavier(h, ds * c1, rng));
  dec_patch_b_ = Param("vq.dec_patch.b", zeros(1, ds * c1));
  conv_out_w_ = Param("vq.conv_out.w", ad::xavier(3 * c1, kChannels, rng));
  conv_out_b_ = Param("vq.conv_out.b", zeros(1, kChannels));
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix codes(config_.codebook_size, d);
  for (Eigen::Index c = 0; c < codes.cols(); ++c) {
    for (Eigen::Index r = 0; r < codes.rows(); ++r) {
      codes(r, c) = normal(rng);
    }
  }
  codebook_param_ = Param("vq.codebook", codes);
  sync_codebook();
}

void VqVae::sync_codebook() {
  codebook_.vectors = codebook_param_.value;
  if (codebook_.usage_counts.size() != static_cast<std::size_t>(codebook_param_.value.rows())) {
    codebook_.usage_counts.assign(static_cast<std::size_t>(codebook_param_.value.rows()), 0);
  }
}

int VqVae::latent_length(std::size_t cycle_length) const {
  const auto ds = static_cast<std::size_t>(config_.downsample);
  if (cycle_length < ds) {
    throw DataError("cycle of length " + std::to_string(cycle_length) + " is shorter than one downsampling window (" +
                    std::to_string(ds) + ")");
  }
  return static_cast<int>((cycle_length + ds - 1) / ds);
}

Var VqVae::encode_graph(Graph& g, const Matrix& x) {
  const int m = latent_length(static_cast<std::size_t>(x.rows()));
  const int pad = m * config_.downsample - static_cast<int>(x.rows());
  Var in = g.constant(x);
  Var h1 = ad::gelu(ad::linear(ad::unfold(in, 3, 1, 1, 1), g.param(conv_in_w_), g.param(conv_in_b_)));
  Var patches = ad::unfold(h1, config_.downsample, config_.downsample, 0, pad);
  Var h2 = ad::gelu(ad::linear(patches, g.param(patch_w_), g.param(patch_b_)));
  return ad::linear(h2, g.param(enc_out_w_), g.param(enc_out_b_));
}

Var VqVae::decode_graph(Graph& g, Var quantized, std::size_t cycle_length) {
  const int m = latent_length(cycle_length);
  if (quantized.rows() != m || quantized.cols() != config_.embedding_dim) {
    throw DataError("decode: expected " + std::to_string(m) + " x " + std::to_string(config_.embedding_dim) +
                    " latents, got " + std::to_string(quantized.rows()) + " x " + std::to_string(quantized.cols()));
  }
  Var h = ad::gelu(ad::linear(quantized, g.param(dec_in_w_), g.param(dec_in_b_)));
  Var p = ad::gelu(ad::linear(h, g.param(dec_patch_w_), g.param(dec_patch_b_)));
  Var seq = ad::reshape(p, static_cast<Eigen::Index>(m) * config_.downsample, config_.conv_channels);
  Var out = ad::linear(ad::unfold(seq, 3, 1, 1, 1), g.param(conv_out_w_), g.param(conv_out_b_));
  return ad::slice_rows(out, 0, static_cast<Eigen::Index>(cycle_length));
}

Var VqVae::loss_graph(Graph& g, const Matrix& x, bool bypass_quantization, std::vector<int>* tokens_out) {
  Var z_e = encode_graph(g, x);
  Var target = g.constant(x);
  if (bypass_quantization) {
    return ad::mean_row_sq_dist(decode_graph(g, z_e, static_cast<std::size_t>(x.rows())), target);
  }
  Codebook view{codebook_param_.value, {}};
  const Quantized q = quantize(LatentSequence{z_e.value()}, view);
  if (tokens_out != nullptr) *tokens_out = q.tokens.tokens;
  Var selected = ad::gather_rows(g.param(codebook_param_), q.tokens.tokens);
  // Straight-through: forward uses the code, backward passes through to z_e.
  Var z_st = z_e + g.constant(selected.value() - z_e.value());
  Var recon = ad::mean_row_sq_dist(decode_graph(g, z_st, static_cast<std::size_t>(x.rows())), target);
  Var codebook_term = ad::mean_row_sq_dist(ad::stop_gradient(z_e), selected);
  Var commitment = ad::mean_row_sq_dist(z_e, ad::stop_gradient(selected));
  return recon + codebook_term + commitment * config_.commitment_beta;
}

LatentSequence VqVae::encode(const WeldCycle& normalized) const {
  Graph g;
  // encode_graph only reads parameters; the const_cast never mutates state.
  return LatentSequence{const_cast<VqVae*>(this)->encode_graph(g, cycle_matrix(normalized)).value()};
}

WeldCycle VqVae::decode(const LatentSequence& quantized, std::size_t cycle_length) const {
  Graph g;
  Var out = const_cast<VqVae*>(this)->decode_graph(g, g.constant(quantized.vectors), cycle_length);
  WeldCycle cycle;
  cycle.current.resize(cycle_length);
  cycle.voltage.resize(cycle_length);
  for (std::size_t t = 0; t < cycle_length; ++t) {
    cycle.current[t] = out.value()(static_cast<Eigen::Index>(t), 0);
    cycle.voltage[t] = out.value()(static_cast<Eigen::Index>(t), 1);
  }
  return cycle;
}

std::vector<Param*> VqVae::autoencoder_parameters() {
  return {&conv_in_w_, &conv_in_b_, &patch_w_, &patch_b_, &enc_out_w_, &enc_out_b_,
          &dec_in_w_,  &dec_in_b_,  &dec_patch_w_, &dec_patch_b_, &conv_out_w_, &conv_out_b_};
}

std::vector<Param*> VqVae::parameters() {
  std::vector<Param*> out = autoencoder_parameters();
  out.push_back(&codebook_param_);
  return out;
}

std::vector<const Param*> VqVae::parameters() const {
  std::vector<const Param*> out;
  for (Param* p : const_cast<VqVae*>(this)->parameters()) out.push_back(p);
  return out;
}

class VqVaeTrainer {
 public:
  static void init_codebook_from_data(VqVae& model, const std::vector<Matrix>& inputs, std::mt19937_64& rng) {
    std::vector<Eigen::RowVectorXd> pool;
    for (const Matrix& x : inputs) {
      Graph g;
      const Matrix z = model.encode_graph(g, x).value();
      for (Eigen::Index r = 0; r < z.rows(); ++r) pool.push_back(z.row(r));
    }
    std::normal_distribution<double> jitter(0.0, 1e-2);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    Matrix& codes = model.codebook_param_.value;
    for (Eigen::Index k = 0; k < codes.rows(); ++k) {
      codes.row(k) = pool[pick(rng)];
      for (Eigen::Index c = 0; c < codes.cols(); ++c) codes(k, c) += jitter(rng);
    }
  }
};

VqTrainResult train_vqvae(const CycleBatch& train, const CycleBatch& val, const VqConfig& config, std::uint64_t seed) {
  if (train.empty() || val.empty()) {
    throw DataError("train_vqvae requires nonempty train and validation batches");
  }
  VqTrainResult result{VqVae(config, seed), {}};
  VqVae& model = result.model;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);

  std::vector<Matrix> train_x;
  train_x.reserve(train.size());
  for (const WeldCycle& c : train.cycles) {
    validate(c);
    model.latent_length(c.length());
    train_x.push_back(cycle_matrix(c));
  }
  VqVaeTrainer::init_codebook_from_data(model, train_x, rng);

  ad::Adam adam(model.parameters(), ad::AdamOptions{.learning_rate = config.learning_rate});
  auto mean_recon = [&model](const CycleBatch& batch) {
    double total = 0.0;
    for (const WeldCycle& c : batch.cycles) {
      total += reconstruction_error(c, model.decode(quantize(model.encode(c), model.codebook()).quantized, c.length()));
    }
    return total / static_cast<double>(batch.size());
  };
  auto evaluate = [&](int epoch, double train_loss) {
    model.sync_codebook();
    VqEpochRecord rec{epoch, train_loss, mean_recon(train), mean_recon(val)};
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.train_recon) || !std::isfinite(rec.val_recon)) {
      throw TrainingError("vqvae", epoch, "non-finite VQ-VAE loss");
    }
    return rec;
  };

  // Epoch 0 records the untrained (codebook-initialised) state.
  double initial_loss = 0.0;
  for (const Matrix& x : train_x) {
    Graph g;
    initial_loss += model.loss_graph(g, x, false).scalar();
  }
  result.trace.push_back(evaluate(0, initial_loss / static_cast<double>(train_x.size())));

  std::vector<std::size_t> order(train_x.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      adam.zero_grad();
      for (std::size_t i = start; i < stop; ++i) {
        Graph g;
        Var loss = model.loss_graph(g, train_x[order[i]], false);
        if (!std::isfinite(loss.scalar())) {
          throw TrainingError("vqvae", epoch, "non-finite VQ-VAE loss");
        }
        epoch_loss += loss.scalar();
        g.backward(loss);
      }
      adam.step(1.0 / static_cast<double>(stop - start));
    }

    result.trace.push_back(evaluate(epoch, epoch_loss / static_cast<double>(train_x.size())));
  }

  model.sync_codebook();
  std::fill(model.codebook().usage_counts.begin(), model.codebook().usage_counts.end(), 0);
  for (const WeldCycle& c : train.cycles) {
    for (int t : quantize(model.encode(c), model.codebook()).tokens.tokens) {
      ++model.codebook().usage_counts[static_cast<std::size_t>(t)];
    }
  }
  return result;
}

}  // namespace weldood
