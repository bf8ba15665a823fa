#include "fixtures.hpp"
#include "oracles.hpp"

#include "weldood/errors.hpp"
#include "weldood/ood_scoring.hpp"

#include <doctest.h>

#include <numeric>

using namespace weldood;

namespace {

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

ad::RowVector row(std::initializer_list<double> xs) {
  ad::RowVector r(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) r(i++) = x;
  return r;
}

}  // namespace

TEST_CASE("score kind names round trip") {
  for (ScoreKind k : all_score_kinds()) CHECK(parse_score_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_score_kind("energy"), ConfigError);
}

TEST_CASE("msp examples") {
  CHECK(msp_score(ClassPrediction{{0.5, 0.5}, 0}) == 0.5);
  CHECK(msp_score(ClassPrediction{{1.0, 0.0}, 0}) == 0.0);
}

TEST_CASE("mahalanobis hand example and zero distance at a class mean") {
  // One feature, class means 0 and 4, unit within-class variance.
  std::vector<ad::RowVector> f{row({-1}), row({1}), row({3}), row({5})};
  const std::vector<int> labels{0, 0, 1, 1};
  const GaussianStats s = fit_mahalanobis(f, labels, 0.0);
  CHECK(s.covariance(0, 0) == doctest::Approx(2.0));  // scatter 4 over n - C = 2
  const GaussianStats unit{s.means, Matrix::Identity(1, 1), Matrix::Identity(1, 1), 0.0};
  CHECK(mahalanobis_score(unit, row({2})) == doctest::Approx(2.0));
  CHECK(mahalanobis_score(s, row({4})) == 0.0);
}

TEST_CASE("mahalanobis fit recovers means on Gaussian samples") {
  std::mt19937_64 rng(50);
  std::normal_distribution<double> g(0, 1);
  std::vector<ad::RowVector> f;
  std::vector<int> labels;
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < 1000; ++i) {
      f.push_back(row({g(rng) + 3.0 * c, g(rng) - 1.0 * c, g(rng)}));
      labels.push_back(c);
    }
  }
  const GaussianStats s = fit_mahalanobis(f, labels);
  CHECK(std::abs(s.means(0, 0)) < 0.1);
  CHECK(std::abs(s.means(1, 0) - 3.0) < 0.1);
  CHECK(std::abs(s.means(1, 1) + 1.0) < 0.1);
  CHECK((s.covariance - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 0.15);
}

TEST_CASE("mahalanobis degenerate fits") {
  std::vector<ad::RowVector> dup{row({1, 1}), row({1, 1}), row({2, 2}), row({2, 2})};
  const std::vector<int> labels{0, 0, 1, 1};
  CHECK_THROWS_AS(fit_mahalanobis(dup, labels, 0.0), UndefinedMetricError);
  CHECK_NOTHROW(fit_mahalanobis(std::vector<ad::RowVector>{row({1, 0}), row({0, 1}), row({2, 2}), row({3, 1})},
                                labels));
  std::vector<ad::RowVector> few{row({1}), row({2}), row({3})};
  CHECK_THROWS_AS(fit_mahalanobis(few, std::vector<int>{0, 0, 1}), DataError);
}

TEST_CASE("mahalanobis is invariant to a rotation plus shift") {
  std::mt19937_64 rng(51);
  std::normal_distribution<double> g(0, 1);
  const int d = 4;
  Matrix a(d, d);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
  const Matrix q = Eigen::HouseholderQR<Matrix>(a).householderQ();
  ad::RowVector shift(d);
  for (int i = 0; i < d; ++i) shift(i) = g(rng);
  std::vector<ad::RowVector> f, ft;
  std::vector<int> labels;
  for (int i = 0; i < 60; ++i) {
    ad::RowVector x(d);
    for (int j = 0; j < d; ++j) x(j) = g(rng) + (i % 2) * 2.0 * (j == 0);
    f.push_back(x);
    ft.push_back(x * q + shift);
    labels.push_back(i % 2);
  }
  const GaussianStats s = fit_mahalanobis(f, labels), st = fit_mahalanobis(ft, labels);
  for (int i = 0; i < 20; ++i) {
    ad::RowVector x(d);
    for (int j = 0; j < d; ++j) x(j) = 2 * g(rng);
    CHECK(std::abs(mahalanobis_score(s, x) - mahalanobis_score(st, x * q + shift)) < 1e-6);
  }
}

TEST_CASE("method validation") {
  ScoreMethod m;
  m.odin_temperature = 0;
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m = {};
  m.odin_epsilon = -1;
  CHECK_THROWS_AS(m.validate(), ConfigError);
  const auto& t = fixture::tiny();
  ScoreMethod maha;
  maha.kind = ScoreKind::kMahalanobis;
  CHECK_THROWS_AS(score_batch(maha, t.result.bundle, t.data.val), ConfigError);
}

TEST_CASE("native scores match the per-op computations") {
  const auto& t = fixture::tiny();
  const ModelBundle& b = t.result.bundle;
  const CycleBatch z = b.normalize(t.data.val);
  const std::vector<CycleAnalysis> an = analyze(b, z);
  ScoreMethod m;
  m.kind = ScoreKind::kArNll;
  const std::vector<double> ar = score_batch(m, b, t.data.val);
  m.kind = ScoreKind::kQuant;
  const std::vector<double> qs = score_batch(m, b, t.data.val);
  m.kind = ScoreKind::kRecon;
  const std::vector<double> rs = score_batch(m, b, z);
  for (std::size_t i = 0; i < z.size(); ++i) {
    CHECK(ar[i] == sequence_nll(b.transformer, an[i].quantized.tokens.tokens));
    CHECK(qs[i] == an[i].quantized.s_quant);
    CHECK(rs[i] == an[i].s_recon);
    CHECK(ar[i] >= 0);
    CHECK(qs[i] >= 0);
    CHECK(rs[i] >= 0);
    CHECK(std::abs(an[i].quantized.s_quant - oracle::quantize(an[i].latents.vectors, b.codec.codebook().vectors).s_quant) < 1e-12);
  }
}

TEST_CASE("odin with unit temperature and zero epsilon equals msp") {
  const auto& t = fixture::tiny();
  const ModelBundle& b = t.result.bundle;
  const auto tokens = tokenize(b, b.normalize(t.data.val));
  for (std::size_t i = 0; i < 10; ++i) {
    const double msp = msp_score(classify(b.transformer, tokens[i].tokens));
    CHECK(std::abs(odin_score(b.transformer, tokens[i].tokens, 1.0, 0.0) - msp) < 1e-9);
    const double perturbed = odin_score(b.transformer, tokens[i].tokens, 1000.0, 0.0014);
    CHECK(perturbed >= 0.0);
    CHECK(perturbed <= 0.5);
  }
}

TEST_CASE("scores csv layout") {
  const auto& t = fixture::tiny();
  CycleBatch two;
  two.cycles = {t.data.val.cycles[0], t.data.val.cycles[1]};
  const std::string csv = format_scores_csv(two, ScoreKind::kQuant, {0.5, 1.25});
  CHECK(csv == "cycle_id,method,score\n" + two.cycles[0].cycle_id + ",quant,0.5\n" + two.cycles[1].cycle_id +
                   ",quant,1.25\n");
  CHECK_THROWS_AS(format_scores_csv(two, ScoreKind::kQuant, {0.5}), DataError);
}

TEST_CASE("every method scores the strong shift above the validation batch (seed 1)") {
  const auto& t = fixture::default_seed1();
  const auto [id, ood] = split_id_ood(t.config, t.data.test);
  for (ScoreKind k : all_score_kinds()) {
    const ScoreMethod m = make_method(t.config, k, t.result.bundle, t.data.train);
    const double v = mean(score_batch(m, t.result.bundle, t.data.val));
    const double o = mean(score_batch(m, t.result.bundle, ood));
    CHECK_MESSAGE(o > v, to_string(k));
  }
}
