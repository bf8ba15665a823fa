#include "weldood/ar_model.hpp"

#include "weldood/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace weldood {

using ad::Graph;
using ad::Matrix;
using ad::Param;
using ad::Var;

void ArConfig::validate() const {
  if (vocab < 2) throw ConfigError("ar.vocab must be >= 2");
  if (context_length < 2) throw ConfigError("ar.context_length must be >= 2");
  if (layers < 1 || heads < 1 || model_dim < 1 || ffn_dim < 1) throw ConfigError("ar layer sizes must be >= 1");
  if (model_dim % heads != 0) throw ConfigError("ar.model_dim must be divisible by ar.heads");
  if (class_count != 2) throw ConfigError("ar.class_count must be 2");
  if (!(ar_learning_rate > 0.0) || !(cls_learning_rate > 0.0)) throw ConfigError("ar learning rates must be > 0");
  if (batch_size < 1) throw ConfigError("ar.batch_size must be >= 1");
  if (ar_epochs < 0 || cls_interval < 1 || cls_epochs_per_interval < 0 || finetune_epochs < 0) {
    throw ConfigError("ar epoch schedule values must be nonnegative (cls_interval >= 1)");
  }
}

std::string to_string(EpochPhase phase) {
  switch (phase) {
    case EpochPhase::kAutoregressive:
      return "ar";
    case EpochPhase::kClassification:
      return "cls";
    case EpochPhase::kFinetune:
      return "finetune";
  }
  return "ar";
}

ArTransformer::ArTransformer(const ArConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const int d = config_.model_dim;
  const int k = config_.vocab;
  std::normal_distribution<double> emb(0.0, 0.1);
  auto random = [&](int r, int c) {
    Matrix m(r, c);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = emb(rng);
    return m;
  };
  auto zeros = [](int r, int c) { return Matrix::Zero(r, c); };
  auto ones = [](int r, int c) { return Matrix::Ones(r, c); };
  tok_emb_ = Param("ar.tok_emb", random(k + 1, d));
  pos_emb_ = Param("ar.pos_emb", random(config_.context_length, d));
  for (int l = 0; l < config_.layers; ++l) {
    const std::string p = "ar.layer" + std::to_string(l) + ".";
    Layer layer;
    layer.ln1_g = Param(p + "ln1.g", ones(1, d));
    layer.ln1_b = Param(p + "ln1.b", zeros(1, d));
    layer.wq = Param(p + "wq", ad::xavier(d, d, rng));
    layer.wk = Param(p + "wk", ad::xavier(d, d, rng));
    layer.wv = Param(p + "wv", ad::xavier(d, d, rng));
    layer.wo = Param(p + "wo", ad::xavier(d, d, rng) * (1.0 / std::sqrt(2.0 * config_.layers)));
    layer.bo = Param(p + "bo", zeros(1, d));
    layer.ln2_g = Param(p + "ln2.g", ones(1, d));
    layer.ln2_b = Param(p + "ln2.b", zeros(1, d));
    layer.w1 = Param(p + "w1", ad::xavier(d, config_.ffn_dim, rng));
    layer.b1 = Param(p + "b1", zeros(1, config_.ffn_dim));
    layer.w2 = Param(p + "w2", ad::xavier(config_.ffn_dim, d, rng) * (1.0 / std::sqrt(2.0 * config_.layers)));
    layer.b2 = Param(p + "b2", zeros(1, d));
    layers_.push_back(std::move(layer));
  }
  lnf_g_ = Param("ar.lnf.g", ones(1, d));
  lnf_b_ = Param("ar.lnf.b", zeros(1, d));
  // Zero next-token head: an untrained model predicts the uniform distribution.
  head_w_ = Param("ar.head.w", zeros(d, k));
  head_b_ = Param("ar.head.b", zeros(1, k));
  cls_w_ = Param("ar.cls.w", ad::xavier(d, config_.class_count, rng));
  cls_b_ = Param("ar.cls.b", zeros(1, config_.class_count));
}

void ArTransformer::check_tokens(std::span<const int> tokens, std::size_t max_len) const {
  if (tokens.size() > max_len) {
    throw DataError("token sequence of length " + std::to_string(tokens.size()) + " exceeds the context limit " +
                    std::to_string(max_len));
  }
  for (int t : tokens) {
    if (t < 0 || t >= config_.vocab) {
      throw DataError("token " + std::to_string(t) + " outside vocabulary [0, " + std::to_string(config_.vocab) + ")");
    }
  }
}

Matrix ArTransformer::embed(std::span<const int> tokens) const {
  check_tokens(tokens, static_cast<std::size_t>(config_.context_length - 1));
  const auto rows = static_cast<Eigen::Index>(tokens.size() + 1);
  Matrix x(rows, config_.model_dim);
  x.row(0) = tok_emb_.value.row(config_.bos_token()) + pos_emb_.value.row(0);
  for (Eigen::Index i = 1; i < rows; ++i) {
    x.row(i) = tok_emb_.value.row(tokens[static_cast<std::size_t>(i - 1)]) + pos_emb_.value.row(i);
  }
  return x;
}

ArForward ArTransformer::forward(Graph& g, std::span<const int> tokens, const Matrix* embedding_override) {
  check_tokens(tokens, static_cast<std::size_t>(config_.context_length - 1));
  const auto rows = static_cast<Eigen::Index>(tokens.size() + 1);
  ArForward out;
  if (embedding_override != nullptr) {
    if (embedding_override->rows() != rows || embedding_override->cols() != config_.model_dim) {
      throw DataError("embedding override has the wrong shape");
    }
    out.embedded = g.constant(*embedding_override);
  } else {
    std::vector<int> ids;
    ids.reserve(static_cast<std::size_t>(rows));
    ids.push_back(config_.bos_token());
    ids.insert(ids.end(), tokens.begin(), tokens.end());
    std::vector<int> positions(static_cast<std::size_t>(rows));
    std::iota(positions.begin(), positions.end(), 0);
    out.embedded = ad::gather_rows(g.param(tok_emb_), ids) + ad::gather_rows(g.param(pos_emb_), positions);
  }

  const int d = config_.model_dim;
  const int dh = d / config_.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Var x = out.embedded;
  for (Layer& layer : layers_) {
    Var h = ad::layer_norm(x, g.param(layer.ln1_g), g.param(layer.ln1_b));
    Var q = ad::matmul(h, g.param(layer.wq));
    Var k = ad::matmul(h, g.param(layer.wk));
    Var v = ad::matmul(h, g.param(layer.wv));
    std::vector<Var> heads;
    for (int hd = 0; hd < config_.heads; ++hd) {
      Var qh = ad::slice_cols(q, hd * dh, dh);
      Var kh = ad::slice_cols(k, hd * dh, dh);
      Var vh = ad::slice_cols(v, hd * dh, dh);
      Var att = ad::softmax_rows(ad::matmul(qh, ad::transpose(kh)) * scale, /*causal=*/true);
      heads.push_back(ad::matmul(att, vh));
    }
    Var merged = heads.size() == 1 ? heads.front() : ad::concat_cols(heads);
    x = x + ad::linear(merged, g.param(layer.wo), g.param(layer.bo));
    Var h2 = ad::layer_norm(x, g.param(layer.ln2_g), g.param(layer.ln2_b));
    Var ff = ad::linear(ad::gelu(ad::linear(h2, g.param(layer.w1), g.param(layer.b1))), g.param(layer.w2),
                        g.param(layer.b2));
    x = x + ff;
  }
  out.hidden = ad::layer_norm(x, g.param(lnf_g_), g.param(lnf_b_));
  out.ar_logits = ad::linear(out.hidden, g.param(head_w_), g.param(head_b_));
  out.pooled = ad::mean_rows(out.hidden);
  out.class_logits = ad::linear(out.pooled, g.param(cls_w_), g.param(cls_b_));
  return out;
}

std::vector<Param*> ArTransformer::parameters() {
  std::vector<Param*> out{&tok_emb_, &pos_emb_};
  for (Layer& l : layers_) {
    for (Param* p : {&l.ln1_g, &l.ln1_b, &l.wq, &l.wk, &l.wv, &l.wo, &l.bo, &l.ln2_g, &l.ln2_b, &l.w1, &l.b1, &l.w2,
                     &l.b2}) {
      out.push_back(p);
    }
  }
  for (Param* p : {&lnf_g_, &lnf_b_, &head_w_, &head_b_, &cls_w_, &cls_b_}) out.push_back(p);
  return out;
}

std::vector<const Param*> ArTransformer::parameters() const {
  std::vector<const Param*> out;
  for (Param* p : const_cast<ArTransformer*>(this)->parameters()) out.push_back(p);
  return out;
}

std::vector<Param*> ArTransformer::classifier_parameters() { return {&lnf_g_, &lnf_b_, &cls_w_, &cls_b_}; }

std::vector<Param*> ArTransformer::head_parameters() {
  return {&lnf_g_, &lnf_b_, &head_w_, &head_b_, &cls_w_, &cls_b_};
}

namespace {

ArTransformer& mut(const ArTransformer& m) {
  // Forward passes only read parameters.
  return const_cast<ArTransformer&>(m);
}

}  // namespace

ad::RowVector next_token_distribution(const ArTransformer& model, std::span<const int> prefix) {
  if (prefix.size() >= static_cast<std::size_t>(model.config().context_length)) {
    throw DataError("prefix of length " + std::to_string(prefix.size()) + " is too long for context length " +
                    std::to_string(model.config().context_length));
  }
  Graph g;
  const ArForward f = mut(model).forward(g, prefix);
  return ad::softmax(f.ar_logits.value().row(f.ar_logits.rows() - 1));
}

double sequence_nll(const ArTransformer& model, std::span<const int> tokens) {
  if (tokens.empty()) {
    throw DataError("sequence_nll of an empty sequence");
  }
  model.check_tokens(tokens, static_cast<std::size_t>(model.config().context_length));
  Graph g;
  // Inputs [BOS, z_1..z_{T-1}] yield T predictive rows for z_1..z_T.
  const ArForward f = mut(model).forward(g, tokens.first(tokens.size() - 1));
  const Matrix& logits = f.ar_logits.value();
  double total = 0.0;
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const double mx = logits.row(t).maxCoeff();
    const double lse = mx + std::log((logits.row(t).array() - mx).exp().sum());
    total += lse - logits(t, tokens[static_cast<std::size_t>(t)]);
  }
  return total / static_cast<double>(tokens.size());
}

ClassPrediction classify(const ArTransformer& model, std::span<const int> tokens) {
  Graph g;
  const ArForward f = mut(model).forward(g, tokens);
  const ad::RowVector p = ad::softmax(f.class_logits.value().row(0));
  ClassPrediction out;
  out.probabilities = {p(0), p(1)};
  out.predicted_label = p(1) > p(0) ? 1 : 0;
  return out;
}

ad::RowVector pooled_features(const ArTransformer& model, std::span<const int> tokens) {
  Graph g;
  return mut(model).forward(g, tokens).pooled.value().row(0);
}

std::vector<EpochPhase> training_schedule(const ArConfig& config) {
  std::vector<EpochPhase> out;
  for (int e = 1; e <= config.ar_epochs; ++e) {
    out.push_back(EpochPhase::kAutoregressive);
    if (e % config.cls_interval == 0) {
      for (int c = 0; c < config.cls_epochs_per_interval; ++c) out.push_back(EpochPhase::kClassification);
    }
  }
  for (int f = 0; f < config.finetune_epochs; ++f) out.push_back(EpochPhase::kFinetune);
  return out;
}

double run_epoch(ArTransformer& model, ad::Adam& optimizer, const std::vector<LabeledSequence>& data,
                 bool autoregressive, int batch_size, std::mt19937_64& rng) {
  if (data.empty()) {
    throw DataError("run_epoch on empty data");
  }
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  double total = 0.0;
  const auto bs = static_cast<std::size_t>(batch_size);
  for (std::size_t start = 0; start < order.size(); start += bs) {
    const std::size_t stop = std::min(order.size(), start + bs);
    optimizer.zero_grad();
    for (std::size_t i = start; i < stop; ++i) {
      const LabeledSequence& s = data[order[i]];
      Graph g;
      const ArForward f = model.forward(g, s.tokens);
      Var loss;
      if (autoregressive) {
        loss = ad::cross_entropy(ad::slice_rows(f.ar_logits, 0, static_cast<Eigen::Index>(s.tokens.size())), s.tokens);
      } else {
        const int label[1] = {s.label};
        loss = ad::cross_entropy(f.class_logits, label);
      }
      if (!std::isfinite(loss.scalar())) {
        return std::numeric_limits<double>::quiet_NaN();
      }
      total += loss.scalar();
      g.backward(loss);
    }
    optimizer.step(1.0 / static_cast<double>(stop - start));
  }
  return total / static_cast<double>(data.size());
}

EvalResult evaluate(const ArTransformer& model, const std::vector<LabeledSequence>& data) {
  EvalResult r;
  if (data.empty()) return r;
  std::size_t correct = 0;
  for (const LabeledSequence& s : data) {
    Graph g;
    const ArForward f = mut(model).forward(g, s.tokens);
    const int label[1] = {s.label};
    r.ar_loss += ad::cross_entropy(ad::slice_rows(f.ar_logits, 0, static_cast<Eigen::Index>(s.tokens.size())),
                                   s.tokens)
                     .scalar();
    r.cls_loss += ad::cross_entropy(f.class_logits, label).scalar();
    const auto& z = f.class_logits.value();
    if ((z(0, 1) > z(0, 0) ? 1 : 0) == s.label) ++correct;
  }
  const double n = static_cast<double>(data.size());
  r.ar_loss /= n;
  r.cls_loss /= n;
  r.accuracy = static_cast<double>(correct) / n;
  return r;
}

ArTrainResult train_joint(const std::vector<LabeledSequence>& train, const std::vector<LabeledSequence>& val,
                          const ArConfig& config, std::uint64_t seed) {
  if (train.empty() || val.empty()) {
    throw DataError("train_joint requires nonempty train and validation sets");
  }
  ArTrainResult result{ArTransformer(config, seed), {}};
  ArTransformer& model = result.model;
  for (const auto* set : {&train, &val}) {
    for (const LabeledSequence& s : *set) {
      model.check_tokens(s.tokens, static_cast<std::size_t>(config.context_length - 1));
      if (s.tokens.empty()) throw DataError("empty token sequence in training data");
      if (s.label != 0 && s.label != 1) throw DataError("labels must be 0 or 1");
    }
  }
  std::mt19937_64 rng(seed ^ 0xd1b54a32d192ed03ULL);
  ad::Adam ar_opt(model.parameters(), ad::AdamOptions{.learning_rate = config.ar_learning_rate});
  ad::Adam cls_opt(model.parameters(), ad::AdamOptions{.learning_rate = config.cls_learning_rate});

  int ar_done = 0;
  int index = 0;
  for (EpochPhase phase : training_schedule(config)) {
    ++index;
    const bool ar = phase == EpochPhase::kAutoregressive;
    if (ar) ++ar_done;
    const double loss = run_epoch(model, ar ? ar_opt : cls_opt, train, ar, config.batch_size, rng);
    if (!std::isfinite(loss)) {
      throw TrainingError(to_string(phase), index, "non-finite transformer loss");
    }
    const EvalResult ev = evaluate(model, val);
    const double val_loss = ar ? ev.ar_loss : ev.cls_loss;
    if (!std::isfinite(val_loss)) {
      throw TrainingError(to_string(phase), index, "non-finite validation loss");
    }
    result.history.push_back(EpochRecord{index, phase, ar_done, loss, val_loss, ev.accuracy});
  }
  return result;
}

}  // namespace weldood
