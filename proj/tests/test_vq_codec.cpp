#include "oracles.hpp"

#include "weldood/errors.hpp"
#include "weldood/vq_codec.hpp"

#include <doctest.h>

using namespace weldood;

namespace {

VqConfig tiny_vq() {
  VqConfig c;
  c.codebook_size = 8;
  c.embedding_dim = 4;
  c.conv_channels = 4;
  c.hidden = 8;
  c.epochs = 60;
  c.batch_size = 4;
  c.learning_rate = 5e-3;
  return c;
}

CycleBatch normalized(const ProcessParams& p, int n, std::uint64_t seed) {
  const CycleBatch raw = generate_cycles(p, n, seed);
  return apply_normalizer(raw, fit_normalizer(raw));
}

WeldCycle make_cycle(std::vector<double> cur, std::vector<double> vol) {
  WeldCycle c;
  c.current = std::move(cur);
  c.voltage = std::move(vol);
  return c;
}

}  // namespace

TEST_CASE("latent length and encoder determinism") {
  VqVae vq(VqConfig{}, 1);
  CHECK(vq.latent_length(64) == 8);
  CHECK(vq.latent_length(65) == 9);
  CHECK_THROWS_AS(vq.latent_length(7), DataError);
  const WeldCycle c = normalized(ProcessParams{}, 1, 2).cycles[0];
  const LatentSequence a = vq.encode(c), b = vq.encode(c);
  CHECK(a.vectors.rows() == 8);
  CHECK(a.vectors.cols() == 16);
  CHECK(a.vectors == b.vectors);
  WeldCycle d = c;
  d.current[13] += 0.5;
  CHECK(vq.encode(d).vectors != a.vectors);
}

TEST_CASE("quantize hand examples") {
  Codebook cb;
  cb.vectors = Matrix(2, 1);
  cb.vectors << 0, 10;
  LatentSequence z{Matrix(2, 1)};
  z.vectors << 1, 9;
  const Quantized q = quantize(z, cb);
  CHECK(q.tokens.tokens == std::vector<int>{0, 1});
  CHECK(q.s_quant == 1.0);

  Codebook ties;
  ties.vectors = Matrix::Zero(8, 1);
  for (int k = 0; k < 8; ++k) ties.vectors(k, 0) = 100.0 + k;
  ties.vectors(3, 0) = -1.0;
  ties.vectors(7, 0) = 1.0;
  LatentSequence mid{Matrix::Zero(1, 1)};
  CHECK(quantize(mid, ties).tokens.tokens == std::vector<int>{3});

  LatentSequence exact{cb.vectors};
  CHECK(quantize(exact, cb).s_quant == 0.0);
  LatentSequence wrong{Matrix::Zero(2, 3)};
  CHECK_THROWS_AS(quantize(wrong, cb), DataError);
}

TEST_CASE("quantize matches the exhaustive nearest-neighbour oracle") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0, 1);
  for (int it = 0; it < 300; ++it) {
    const int k = 1 + static_cast<int>(rng() % 8), m = 1 + static_cast<int>(rng() % 8), d = 1 + static_cast<int>(rng() % 4);
    Codebook cb;
    cb.vectors = Matrix(k, d);
    LatentSequence z{Matrix(m, d)};
    for (Eigen::Index i = 0; i < cb.vectors.size(); ++i) cb.vectors.data()[i] = std::round(g(rng) * 2) / 2;
    for (Eigen::Index i = 0; i < z.vectors.size(); ++i) z.vectors.data()[i] = std::round(g(rng) * 4) / 4;
    const Quantized q = quantize(z, cb);
    const oracle::QuantResult o = oracle::quantize(z.vectors, cb.vectors);
    CHECK(q.tokens.tokens == o.tokens);
    CHECK(std::abs(q.s_quant - o.s_quant) <= 1e-12);
    for (int j = 0; j < m; ++j) CHECK(q.quantized.vectors.row(j) == cb.vectors.row(q.tokens.tokens[j]));
  }
}

TEST_CASE("reconstruction error arithmetic") {
  const WeldCycle x = make_cycle({0, 0}, {0, 0});
  const WeldCycle y = make_cycle({1, 0}, {0, 2});
  CHECK(reconstruction_error(x, y) == 2.5);
  CHECK(reconstruction_error(y, y) == 0.0);
  const WeldCycle y3 = make_cycle({3, 0}, {0, 6});
  CHECK(reconstruction_error(x, y3) == doctest::Approx(9 * 2.5));
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0, 1);
  for (int it = 0; it < 100; ++it) {
    const std::size_t n = 8 + rng() % 9;
    WeldCycle a, b;
    for (std::size_t i = 0; i < n; ++i) {
      a.current.push_back(g(rng));
      a.voltage.push_back(g(rng));
      b.current.push_back(g(rng));
      b.voltage.push_back(g(rng));
    }
    CHECK(std::abs(reconstruction_error(a, b) - oracle::recon(a, b)) <= 1e-12);
  }
}

TEST_CASE("decode restores the cycle length") {
  VqVae vq(VqConfig{}, 5);
  const WeldCycle c = normalized(ProcessParams{}, 1, 6).cycles[0];
  const Quantized q = quantize(vq.encode(c), vq.codebook());
  const WeldCycle r = vq.decode(q.quantized, c.length());
  CHECK(r.length() == c.length());
  CHECK(vq.decode(q.quantized, c.length()).current == r.current);
}

TEST_CASE("training on one repeated cycle shrinks the reconstruction loss") {
  const WeldCycle c = normalized(ProcessParams{}, 1, 8).cycles[0];
  CycleBatch b;
  for (int i = 0; i < 8; ++i) b.cycles.push_back(c);
  const VqTrainResult r = train_vqvae(b, b, tiny_vq(), 9);
  REQUIRE(r.trace.size() == 61);
  CHECK(r.trace.back().train_recon < 0.1 * r.trace.front().train_recon);

  ProcessParams shifted;
  shifted.base_amplitude = {2.5, 0.2};
  shifted.shape = WaveformShape::kSawtooth;
  const WeldCycle other = generate_cycles(shifted, 1, 10).cycles[0];
  const auto s_recon = [&](const WeldCycle& x) {
    const Quantized q = quantize(r.model.encode(x), r.model.codebook());
    return reconstruction_error(x, r.model.decode(q.quantized, x.length()));
  };
  CHECK(s_recon(c) < s_recon(other));
}

TEST_CASE("vq training is deterministic and uses several codes on varied data") {
  VqConfig cfg = tiny_vq();
  cfg.epochs = 5;
  const CycleBatch data = normalized(ProcessParams{}, 24, 11);
  const VqTrainResult a = train_vqvae(data, data, cfg, 12);
  const VqTrainResult b = train_vqvae(data, data, cfg, 12);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].train_loss == b.trace[i].train_loss);
    CHECK(a.trace[i].val_recon == b.trace[i].val_recon);
  }
  int used = 0;
  for (auto n : a.model.codebook().usage_counts) used += n > 0;
  CHECK(used >= 2);
}

TEST_CASE("invalid vq configs are rejected") {
  VqConfig c;
  c.codebook_size = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.learning_rate = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
