#include "oracles.hpp"

#include "weldood/ar_model.hpp"
#include "weldood/errors.hpp"

#include <doctest.h>

#include <cmath>

using namespace weldood;

namespace {

ArConfig small_ar(int vocab = 6) {
  ArConfig c;
  c.vocab = vocab;
  c.context_length = 9;
  c.layers = 1;
  c.heads = 2;
  c.model_dim = 16;
  c.ffn_dim = 32;
  return c;
}

ad::Param& find(ArTransformer& m, const std::string& name) {
  for (ad::Param* p : m.parameters()) {
    if (p->name == name) return *p;
  }
  throw std::runtime_error("no param " + name);
}

std::vector<LabeledSequence> separable_set(int n, std::uint64_t seed) {
  // Label 1 sequences draw from tokens {0,1,2}, label 0 from {3,4,5}.
  std::mt19937_64 rng(seed);
  std::vector<LabeledSequence> out;
  for (int i = 0; i < n; ++i) {
    LabeledSequence s;
    s.label = i % 2;
    for (int t = 0; t < 8; ++t) s.tokens.push_back(static_cast<int>(rng() % 3) + (s.label ? 0 : 3));
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("untrained model predicts uniformly and nll equals ln K") {
  ArConfig c;
  ArTransformer m(c, 1);
  const std::vector<int> prefix{3, 9, 63};
  const ad::RowVector p = next_token_distribution(m, prefix);
  REQUIRE(p.size() == 64);
  for (Eigen::Index k = 0; k < p.size(); ++k) CHECK(p(k) == doctest::Approx(1.0 / 64).epsilon(1e-12));
  const std::vector<int> seq{1, 2, 3, 4, 5, 6, 7, 8};
  CHECK(sequence_nll(m, seq) == doctest::Approx(std::log(64.0)).epsilon(1e-12));
  CHECK(std::log(64.0) == doctest::Approx(4.1589).epsilon(1e-4));
  CHECK(next_token_distribution(m, std::vector<int>{}).sum() == doctest::Approx(1.0));
}

TEST_CASE("nll hand oracle with a position-independent head") {
  ArConfig c = small_ar(3);
  ArTransformer m(c, 2);
  ad::Param& b = find(m, "ar.head.b");
  b.value << std::log(0.5), std::log(0.25), std::log(0.25);
  const std::vector<int> tokens{0, 1};
  CHECK(sequence_nll(m, tokens) == doctest::Approx(1.5 * std::log(2.0)).epsilon(1e-12));
  b.value << 60.0, 0.0, 0.0;
  CHECK(sequence_nll(m, std::vector<int>{0, 0, 0}) < 1e-20);
}

TEST_CASE("sequence nll equals the per-prefix oracle and distributions are causal") {
  ArConfig c = small_ar();
  ArTransformer m(c, 3);
  std::vector<ad::Param*> params = m.parameters();
  oracle::randomize(params, 30, 0.5);
  std::mt19937_64 rng(31);
  for (int it = 0; it < 100; ++it) {
    std::vector<int> tokens;
    const int t = 1 + static_cast<int>(rng() % 8);
    for (int i = 0; i < t; ++i) tokens.push_back(static_cast<int>(rng() % 6));
    CHECK(std::abs(sequence_nll(m, tokens) - oracle::sequence_nll(m, tokens)) < 1e-9);

    ad::Graph g;
    const ArForward f = m.forward(g, tokens);
    for (int pos = 0; pos <= t; ++pos) {
      const std::vector<int> prefix(tokens.begin(), tokens.begin() + pos);
      const ad::RowVector p = next_token_distribution(m, prefix);
      const ad::RowVector full = ad::softmax(f.ar_logits.value().row(pos));
      CHECK((p - full).cwiseAbs().maxCoeff() < 1e-12);
      CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(p.minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("empty prefix and empty sequence") {
  ArTransformer m(small_ar(), 4);
  CHECK(next_token_distribution(m, std::vector<int>{}).size() == 6);
  CHECK_THROWS_AS(sequence_nll(m, std::vector<int>{}), DataError);
  CHECK_THROWS_AS(sequence_nll(m, std::vector<int>{0, 6}), DataError);
  CHECK_THROWS_AS(next_token_distribution(m, std::vector<int>(9, 0)), DataError);
}

TEST_CASE("classify returns a distribution and is deterministic") {
  ArTransformer m(small_ar(), 5);
  oracle::randomize(m.parameters(), 32);
  std::mt19937_64 rng(33);
  for (int it = 0; it < 50; ++it) {
    std::vector<int> tokens;
    for (int i = 0; i < 6; ++i) tokens.push_back(static_cast<int>(rng() % 6));
    const ClassPrediction a = classify(m, tokens), b = classify(m, tokens);
    CHECK(a.probabilities[0] + a.probabilities[1] == doctest::Approx(1.0));
    CHECK(a.probabilities[0] >= 0.0);
    CHECK(a.probabilities == b.probabilities);
    CHECK(a.predicted_label == (a.probabilities[1] > a.probabilities[0] ? 1 : 0));
  }
}

TEST_CASE("gradient check on a configuration under 100 parameters") {
  ArConfig c;
  c.vocab = 3;
  c.context_length = 4;
  c.layers = 1;
  c.heads = 1;
  c.model_dim = 2;
  c.ffn_dim = 2;
  ArTransformer m(c, 6);
  auto params = m.parameters();
  std::size_t n = 0;
  for (auto* p : params) n += static_cast<std::size_t>(p->size());
  REQUIRE(n <= 100);
  oracle::randomize(params, 34, 0.8);
  const std::vector<int> tokens{2, 0, 1};
  const int label[1] = {0};
  const auto ar = oracle::check_gradients(params, [&](bool bw) {
    ad::Graph g;
    ad::Var loss = ad::cross_entropy(ad::slice_rows(m.forward(g, tokens).ar_logits, 0, 3), tokens);
    if (bw) g.backward(loss);
    return loss.scalar();
  });
  CHECK(ar.failures == 0);
  const auto cls = oracle::check_gradients(params, [&](bool bw) {
    ad::Graph g;
    ad::Var loss = ad::cross_entropy(m.forward(g, tokens).class_logits, label);
    if (bw) g.backward(loss);
    return loss.scalar();
  });
  CHECK(cls.failures == 0);
}

TEST_CASE("default schedule has 41 records in the right order") {
  const std::vector<EpochPhase> s = training_schedule(ArConfig{});
  REQUIRE(s.size() == 41);
  int ar = 0, cls = 0, ft = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == EpochPhase::kAutoregressive) ++ar;
    if (s[i] == EpochPhase::kClassification) ++cls;
    if (s[i] == EpochPhase::kFinetune) ++ft;
  }
  CHECK(ar == 30);
  CHECK(cls == 6);
  CHECK(ft == 5);
  // Classification pairs sit right after AR epochs 10, 20 and 30.
  for (std::size_t idx : {10u, 11u, 22u, 23u, 34u, 35u}) CHECK(s[idx] == EpochPhase::kClassification);
  for (std::size_t idx = 36; idx < 41; ++idx) CHECK(s[idx] == EpochPhase::kFinetune);
}

TEST_CASE("joint training learns a separable labelling and is deterministic") {
  ArConfig c = small_ar();
  c.ar_epochs = 6;
  c.cls_interval = 3;
  c.cls_epochs_per_interval = 2;
  c.finetune_epochs = 4;
  c.ar_learning_rate = 3e-3;
  c.cls_learning_rate = 3e-3;
  const auto train = separable_set(64, 40), val = separable_set(32, 41);
  const ArTrainResult a = train_joint(train, val, c, 7);
  const ArTrainResult b = train_joint(train, val, c, 7);
  REQUIRE(a.history.size() == 6 + 4 + 4);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].phase == b.history[i].phase);
  }
  CHECK(evaluate(a.model, train).accuracy > 0.95);
  double first_ar = -1, last_ar = -1;
  for (const EpochRecord& r : a.history) {
    if (r.phase != EpochPhase::kAutoregressive) continue;
    if (first_ar < 0) first_ar = r.train_loss;
    last_ar = r.train_loss;
  }
  CHECK(last_ar < first_ar);
}

TEST_CASE("non-finite training loss raises a training error with phase and epoch") {
  ArConfig c = small_ar();
  c.ar_epochs = 2;
  c.finetune_epochs = 0;
  c.cls_epochs_per_interval = 0;
  c.ar_learning_rate = 1.7e308;
  c.cls_learning_rate = 1.7e308;
  const auto data = separable_set(16, 42);
  try {
    train_joint(data, data, c, 8);
    FAIL("expected divergence");
  } catch (const TrainingError& e) {
    CHECK(e.phase() == "ar");
    CHECK(e.epoch() >= 1);
  }
}
