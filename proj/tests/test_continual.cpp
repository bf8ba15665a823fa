#include "fixtures.hpp"

#include "weldood/continual.hpp"
#include "weldood/errors.hpp"
#include "weldood/metrics.hpp"

#include <doctest.h>

#include <algorithm>

using namespace weldood;

namespace {

std::vector<std::pair<ProcessParams, int>> schedule(const RunConfig& c,
                                                    std::initializer_list<std::pair<const char*, int>> blocks) {
  std::vector<std::pair<ProcessParams, int>> s;
  for (const auto& [name, n] : blocks) s.emplace_back(c.regime(name), n);
  return s;
}

DeploymentReport fake_report(std::initializer_list<int> labels_per_experience) {
  DeploymentReport r;
  std::size_t total = 0;
  int i = 0;
  for (int n : labels_per_experience) {
    total += static_cast<std::size_t>(n);
    ExperienceRecord rec;
    rec.index = i++;
    rec.triggered = n > 0;
    rec.labels_consumed_cumulative = total;
    r.records.push_back(rec);
  }
  return r;
}

}  // namespace

TEST_CASE("stream tags, sizes and determinism") {
  const RunConfig c = default_run_config();
  const auto s = build_stream(schedule(c, {{"A", 5}, {"B", 5}}), 8, 4);
  REQUIRE(s.size() == 10);
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(s[i].index == static_cast<int>(i));
    CHECK(s[i].batch.size() == 8);
    const std::string want = i < 5 ? s[0].regime_tag : s[5].regime_tag;
    CHECK(s[i].regime_tag == want);
    for (const WeldCycle& w : s[i].batch.cycles) CHECK(w.regime_tag == s[i].regime_tag);
  }
  CHECK(s[0].regime_tag != s[5].regime_tag);
  CHECK(s[0].batch.cycles[0].current != s[1].batch.cycles[0].current);
  const auto again = build_stream(schedule(c, {{"A", 5}, {"B", 5}}), 8, 4);
  CHECK(again[7].batch.cycles[3].voltage == s[7].batch.cycles[3].voltage);
  const auto other = build_stream(schedule(c, {{"A", 5}, {"B", 5}}), 8, 5);
  CHECK(other[7].batch.cycles[3].voltage != s[7].batch.cycles[3].voltage);

  const auto long_stream = build_stream(schedule(c, {{"A", 20}, {"C", 20}, {"D", 13}}), 2, 1);
  CHECK(long_stream.size() == 53);
  CHECK_THROWS_AS(build_stream(schedule(c, {{"A", 1}}), 0, 1), ConfigError);
}

TEST_CASE("trigger decision") {
  const std::vector<double> s{0.9, 0.8, 0.7, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1};
  CHECK(trigger_decision(s, 0.5, 0.25));
  CHECK_FALSE(trigger_decision(s, 0.5, 0.35));
  CHECK(trigger_decision(s, 0.5, 0.3));  // exactly q of the batch
  CHECK(trigger_decision(s, 0.9, 0.1));  // score equal to theta is flagged
  CHECK_FALSE(trigger_decision(s, 1.0, 1.0));
  CHECK_THROWS_AS(trigger_decision(s, 0.5, 0.0), ConfigError);
  CHECK_THROWS_AS(trigger_decision(s, 0.5, 1.5), ConfigError);
  CHECK_THROWS_AS(trigger_decision(std::vector<double>{}, 0.5, 0.5), DataError);
}

TEST_CASE("replay buffer keeps capacity and samples without replacement") {
  const CycleBatch b = generate_cycles(ProcessParams{}, 150, 9);
  ReplayBuffer buf(100, 2);
  buf.insert(b);
  CHECK(buf.size() == 100);
  CHECK(buf.seen() == 150);
  std::mt19937_64 rng(1);
  const CycleBatch s = buf.sample(40, rng);
  CHECK(s.size() == 40);
  std::vector<std::string> ids;
  for (const WeldCycle& w : s.cycles) ids.push_back(w.cycle_id);
  std::sort(ids.begin(), ids.end());
  CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
  CHECK(buf.sample(500, rng).size() == 100);

  ReplayBuffer small(200, 2);
  small.insert(b);
  CHECK(small.size() == 150);
}

TEST_CASE("update config validation") {
  UpdateConfig u;
  CHECK_NOTHROW(u.validate());
  u.buffer_mix = 1.0;
  CHECK_THROWS_AS(u.validate(), ConfigError);
  u = {};
  u.epochs = 0;
  CHECK_THROWS_AS(u.validate(), ConfigError);
  CHECK(parse_strategy(to_string(Strategy::kOodReplay)) == Strategy::kOodReplay);
  for (UpdateScope s : {UpdateScope::kTransformer, UpdateScope::kHeads, UpdateScope::kClassifier}) {
    CHECK(parse_update_scope(to_string(s)) == s);
  }
  CHECK_THROWS_AS(parse_strategy("sometimes"), ConfigError);
}

TEST_CASE("replay update is deterministic and stable on in-distribution data") {
  const auto& t = fixture::tiny();
  const ModelBundle& b = t.result.bundle;
  const CycleBatch fresh = generate_cycles(t.config.regime("A"), 24, 77);
  UpdateConfig u = t.config.deploy.deployment.update;

  const auto val_f1 = [&](const ModelBundle& m) {
    std::vector<int> p;
    for (const TokenSequence& s : tokenize(m, m.normalize(t.data.val))) p.push_back(classify(m.transformer, s.tokens).predicted_label);
    return f1(p, t.data.val.labels());
  };

  ReplayBuffer b1(u.buffer_capacity, 5), b2(u.buffer_capacity, 5);
  b1.insert(t.data.train);
  b2.insert(t.data.train);
  const ModelBundle m1 = replay_update(b, fresh, b1, u, 11);
  const ModelBundle m2 = replay_update(b, fresh, b2, u, 11);
  CHECK(m1.transformer.parameters()[0]->value == m2.transformer.parameters()[0]->value);
  CHECK(b1.seen() == t.data.train.size() + fresh.size());
  CHECK(std::abs(val_f1(m1) - val_f1(b)) < 0.05);

  ModelBundle probe = b;
  for (UpdateScope scope : {UpdateScope::kClassifier, UpdateScope::kHeads}) {
    u.scope = scope;
    const ModelBundle updated = replay_update(b, fresh, b1, u, 12);
    const auto before = b.transformer.parameters();
    const auto after = updated.transformer.parameters();
    const auto scoped = scope == UpdateScope::kHeads ? probe.transformer.head_parameters()
                                                     : probe.transformer.classifier_parameters();
    std::size_t changed = 0;
    for (std::size_t i = 0; i < before.size(); ++i) {
      const bool in_scope =
          std::any_of(scoped.begin(), scoped.end(), [&](const ad::Param* p) { return p->name == before[i]->name; });
      if (!in_scope) CHECK(before[i]->value == after[i]->value);
      if (before[i]->value != after[i]->value) ++changed;
    }
    CHECK(changed > 0);
  }
  const ModelBundle head_only = replay_update(b, fresh, b1, u, 13);
  CHECK(head_only.codec.codebook().vectors == b.codec.codebook().vectors);
  CHECK_THROWS_AS(replay_update(b, CycleBatch{}, b1, u, 1), DataError);
}

TEST_CASE("deployment strategies and label accounting") {
  const auto& t = fixture::tiny();
  const ModelBundle& b = t.result.bundle;
  ScoreMethod recon;
  recon.kind = ScoreKind::kRecon;
  const std::vector<double> val = score_batch(recon, b, t.data.val);
  const double theta = *std::max_element(val.begin(), val.end());
  // Three in-distribution experiences, then the 3x-amplitude shift.
  const auto stream = build_stream(schedule(t.config, {{"A", 3}, {"B", 2}}), 10, 8);
  DeploymentConfig dc = t.config.deploy.deployment;
  dc.trigger_fraction = 0.5;

  const DeploymentReport none = run_deployment(Strategy::kNoCl, stream, b, recon, theta, t.data.train, dc, 1);
  const DeploymentReport always = run_deployment(Strategy::kReplayAlways, stream, b, recon, theta, t.data.train, dc, 1);
  const DeploymentReport gated = run_deployment(Strategy::kOodReplay, stream, b, recon, theta, t.data.train, dc, 1);

  CHECK(none.labels_consumed() == 0);
  CHECK(none.trigger_count() == 0);
  CHECK(always.trigger_count() == 5);
  CHECK(always.labels_consumed() == 50);
  std::size_t prev = 0;
  for (const auto& r : gated.records) {
    CHECK(r.labels_consumed_cumulative >= prev);
    prev = r.labels_consumed_cumulative;
  }
  const auto first = std::find_if(gated.records.begin(), gated.records.end(), [](const auto& r) { return r.triggered; });
  REQUIRE(first != gated.records.end());
  CHECK(first->index == 3);
  CHECK(gated.records[3].flagged_fraction > 0.5);
  // Evaluation happens before the update, so the first records agree.
  CHECK(always.records[0].f1 == none.records[0].f1);
  CHECK(none.tail_mean_f1(2) == doctest::Approx((none.records[3].f1 + none.records[4].f1) / 2));
  const double savings = label_savings(gated, always);
  CHECK(savings == doctest::Approx(1.0 - static_cast<double>(gated.labels_consumed()) / 50.0));

  const auto rerun = run_deployment(Strategy::kOodReplay, stream, b, recon, theta, t.data.train, dc, 1);
  for (std::size_t i = 0; i < rerun.records.size(); ++i) {
    CHECK(rerun.records[i].f1 == gated.records[i].f1);
    CHECK(rerun.records[i].mean_score == gated.records[i].mean_score);
  }
}

TEST_CASE("deployment errors name the experience") {
  const auto& t = fixture::tiny();
  auto stream = build_stream(schedule(t.config, {{"A", 2}}), 4, 8);
  stream[1].batch.cycles.clear();
  ScoreMethod m;
  try {
    run_deployment(Strategy::kNoCl, stream, t.result.bundle, m, 0.0, t.data.train, t.config.deploy.deployment, 1);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).rfind("experience 1: ", 0) == 0);
  }
}

TEST_CASE("label savings") {
  const DeploymentReport always = [&] {
    DeploymentReport r;
    std::size_t total = 0;
    for (int i = 0; i < 53; ++i) {
      total += 10;
      r.records.push_back({i, "", 0, 0, true, 0, 0, total});
    }
    return r;
  }();
  DeploymentReport gated = always;
  std::size_t total = 0;
  for (int i = 0; i < 53; ++i) {
    gated.records[static_cast<std::size_t>(i)].triggered = i < 17;
    if (i < 17) total += 10;
    gated.records[static_cast<std::size_t>(i)].labels_consumed_cumulative = total;
  }
  CHECK(label_savings(gated, always) == doctest::Approx(1.0 - 17.0 / 53.0));
  CHECK(label_savings(gated, always) == doctest::Approx(0.679).epsilon(1e-3));
  CHECK(label_savings(always, always) == 0.0);
  CHECK(label_savings(fake_report({0, 0, 0}), fake_report({5, 5, 5})) == 1.0);
  CHECK_THROWS_AS(label_savings(fake_report({0, 0}), fake_report({0, 0})), UndefinedMetricError);
  CHECK_THROWS_AS(label_savings(fake_report({0, 0}), fake_report({5, 5, 5})), DataError);
}
