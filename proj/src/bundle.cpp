#include "weldood/bundle.hpp"

#include "weldood/errors.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace weldood {

CycleBatch ModelBundle::normalize(const CycleBatch& batch) const {
  if (batch.channel_stats) {
    const ChannelStats& s = *batch.channel_stats;
    if (s.mean != normalizer.mean || s.stddev != normalizer.stddev) {
      throw DataError("batch was normalised with statistics that differ from the bundle's");
    }
    return batch;
  }
  return apply_normalizer(batch, normalizer);
}

std::vector<CycleAnalysis> analyze(const ModelBundle& bundle, const CycleBatch& normalized) {
  std::vector<CycleAnalysis> out;
  out.reserve(normalized.size());
  for (const WeldCycle& c : normalized.cycles) {
    CycleAnalysis a;
    a.latents = bundle.codec.encode(c);
    a.quantized = quantize(a.latents, bundle.codec.codebook());
    a.s_recon = reconstruction_error(c, bundle.codec.decode(a.quantized.quantized, c.length()));
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<TokenSequence> tokenize(const ModelBundle& bundle, const CycleBatch& normalized) {
  std::vector<TokenSequence> out;
  out.reserve(normalized.size());
  for (const WeldCycle& c : normalized.cycles) {
    out.push_back(quantize(bundle.codec.encode(c), bundle.codec.codebook()).tokens);
  }
  return out;
}

std::vector<LabeledSequence> labeled_sequences(const ModelBundle& bundle, const CycleBatch& normalized) {
  const std::vector<int> labels = normalized.labels();
  std::vector<TokenSequence> tokens = tokenize(bundle, normalized);
  std::vector<LabeledSequence> out;
  out.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out.push_back(LabeledSequence{std::move(tokens[i].tokens), labels[i]});
  }
  return out;
}

PipelineTrainResult train_pipeline(const CycleBatch& train, const CycleBatch& val, const VqConfig& vq, ArConfig ar,
                                   std::uint64_t seed) {
  if (train.empty() || val.empty()) {
    throw DataError("train_pipeline requires nonempty train and validation batches");
  }
  PipelineTrainResult out;
  out.bundle.normalizer = fit_normalizer(train);
  const CycleBatch train_n = apply_normalizer(train, out.bundle.normalizer);
  const CycleBatch val_n = apply_normalizer(val, out.bundle.normalizer);

  VqTrainResult vq_result = train_vqvae(train_n, val_n, vq, seed);
  out.bundle.codec = std::move(vq_result.model);
  out.vq_trace = std::move(vq_result.trace);

  std::size_t longest = 0;
  for (const CycleBatch* b : {&train_n, &val_n}) {
    for (const WeldCycle& c : b->cycles) longest = std::max(longest, c.length());
  }
  const int tokens_needed = out.bundle.codec.latent_length(longest);
  ar.vocab = vq.codebook_size;
  ar.context_length = std::max(ar.context_length, tokens_needed + 1);

  ArTrainResult ar_result = train_joint(labeled_sequences(out.bundle, train_n), labeled_sequences(out.bundle, val_n), ar,
                                        seed + 1);
  out.bundle.transformer = std::move(ar_result.model);
  out.ar_history = std::move(ar_result.history);
  return out;
}

// ---- serialisation ----

namespace {

constexpr char kMagic[8] = {'W', 'E', 'L', 'D', 'O', 'O', 'D', 'B'};

static_assert(std::endian::native == std::endian::little, "bundle format assumes a little-endian host");

class Writer {
 public:
  template <class T>
  void pod(const T& v) {
    out_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint64_t>(s.size()));
    out_ += s;
  }
  void matrix(const Matrix& m) {
    pod(static_cast<std::int64_t>(m.rows()));
    pod(static_cast<std::int64_t>(m.cols()));
    out_.append(reinterpret_cast<const char*>(m.data()), sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Matrix matrix() {
    const auto r = pod<std::int64_t>();
    const auto c = pod<std::int64_t>();
    if (r < 0 || c < 0) throw DataError("bundle: negative matrix shape");
    Matrix m(r, c);
    const std::size_t n = sizeof(double) * static_cast<std::size_t>(r * c);
    need(n);
    std::memcpy(m.data(), bytes_.data() + pos_, n);
    pos_ += n;
    return m;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError("bundle: truncated file");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

void write_vq_config(Writer& w, const VqConfig& c) {
  for (int v : {c.codebook_size, c.embedding_dim, c.downsample, c.conv_channels, c.hidden, c.epochs, c.batch_size}) {
    w.pod(static_cast<std::int32_t>(v));
  }
  w.pod(c.commitment_beta);
  w.pod(c.learning_rate);
}

VqConfig read_vq_config(Reader& r) {
  VqConfig c;
  for (int* v : {&c.codebook_size, &c.embedding_dim, &c.downsample, &c.conv_channels, &c.hidden, &c.epochs,
                 &c.batch_size}) {
    *v = r.pod<std::int32_t>();
  }
  c.commitment_beta = r.pod<double>();
  c.learning_rate = r.pod<double>();
  return c;
}

void write_ar_config(Writer& w, const ArConfig& c) {
  for (int v : {c.vocab, c.context_length, c.layers, c.heads, c.model_dim, c.ffn_dim, c.class_count, c.batch_size,
                c.ar_epochs, c.cls_interval, c.cls_epochs_per_interval, c.finetune_epochs}) {
    w.pod(static_cast<std::int32_t>(v));
  }
  w.pod(c.ar_learning_rate);
  w.pod(c.cls_learning_rate);
}

ArConfig read_ar_config(Reader& r) {
  ArConfig c;
  for (int* v : {&c.vocab, &c.context_length, &c.layers, &c.heads, &c.model_dim, &c.ffn_dim, &c.class_count,
                 &c.batch_size, &c.ar_epochs, &c.cls_interval, &c.cls_epochs_per_interval, &c.finetune_epochs}) {
    *v = r.pod<std::int32_t>();
  }
  c.ar_learning_rate = r.pod<double>();
  c.cls_learning_rate = r.pod<double>();
  return c;
}

void write_params(Writer& w, const std::vector<const ad::Param*>& params) {
  w.pod(static_cast<std::uint32_t>(params.size()));
  for (const ad::Param* p : params) {
    w.str(p->name);
    w.matrix(p->value);
  }
}

void read_params(Reader& r, const std::vector<ad::Param*>& params) {
  const auto n = r.pod<std::uint32_t>();
  if (n != params.size()) throw DataError("bundle: parameter count does not match the stored configuration");
  for (ad::Param* p : params) {
    const std::string name = r.str();
    if (name != p->name) throw DataError("bundle: expected parameter '" + p->name + "', found '" + name + "'");
    Matrix m = r.matrix();
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols()) {
      throw DataError("bundle: shape mismatch for parameter '" + name + "'");
    }
    p->value = std::move(m);
    p->zero_grad();
  }
}

}  // namespace

std::string serialize_bundle(const ModelBundle& bundle) {
  Writer w;
  for (char c : kMagic) w.pod(c);
  w.pod(kBundleFormatVersion);
  for (int c = 0; c < kChannels; ++c) {
    w.pod(bundle.normalizer.mean[c]);
    w.pod(bundle.normalizer.stddev[c]);
  }
  write_vq_config(w, bundle.codec.config());
  write_params(w, bundle.codec.parameters());
  const auto& usage = bundle.codec.codebook().usage_counts;
  w.pod(static_cast<std::uint32_t>(usage.size()));
  for (std::int64_t u : usage) w.pod(u);
  write_ar_config(w, bundle.transformer.config());
  write_params(w, bundle.transformer.parameters());
  return w.take();
}

ModelBundle deserialize_bundle(const std::string& bytes) {
  Reader r(bytes);
  for (char c : kMagic) {
    if (r.pod<char>() != c) throw DataError("bundle: bad magic");
  }
  const auto version = r.pod<std::uint32_t>();
  if (version != kBundleFormatVersion) {
    throw DataError("bundle: unsupported format version " + std::to_string(version));
  }
  ModelBundle b;
  for (int c = 0; c < kChannels; ++c) {
    b.normalizer.mean[c] = r.pod<double>();
    b.normalizer.stddev[c] = r.pod<double>();
  }
  b.codec = VqVae(read_vq_config(r), 0);
  read_params(r, b.codec.parameters());
  b.codec.sync_codebook();
  const auto n_usage = r.pod<std::uint32_t>();
  if (n_usage != b.codec.codebook().usage_counts.size()) throw DataError("bundle: usage count size mismatch");
  for (auto& u : b.codec.codebook().usage_counts) u = r.pod<std::int64_t>();
  b.transformer = ArTransformer(read_ar_config(r), 0);
  read_params(r, b.transformer.parameters());
  if (!r.done()) throw DataError("bundle: trailing bytes");
  return b;
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const std::string bytes = serialize_bundle(bundle);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_bundle(buf.str());
}

}  // namespace weldood
