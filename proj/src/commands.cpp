#include "weldood/commands.hpp"

#include "weldood/errors.hpp"
#include "weldood/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace weldood {

void write_text(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << contents;
  if (!out) throw DataError("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

CycleBatch generate_split(const RunConfig& config, const std::vector<SplitBlock>& blocks, std::uint64_t seed,
                          std::uint64_t split_index) {
  CycleBatch out;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::uint64_t block_seed = seed * 1000 + split_index * 100 + b;
    CycleBatch part = generate_cycles(config.regime(blocks[b].regime), blocks[b].count, block_seed);
    out.cycles.insert(out.cycles.end(), std::make_move_iterator(part.cycles.begin()),
                      std::make_move_iterator(part.cycles.end()));
  }
  return out;
}

std::vector<int> predict(const ModelBundle& bundle, const CycleBatch& batch) {
  const std::vector<TokenSequence> tokens = tokenize(bundle, bundle.normalize(batch));
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const TokenSequence& t : tokens) out.push_back(classify(bundle.transformer, t.tokens).predicted_label);
  return out;
}

void write_resolved_config(const RunConfig& config) {
  write_text(config.out_dir / "resolved_config.json", format_run_config(config));
}

}  // namespace

DataSplits generate_splits(const RunConfig& config, std::uint64_t seed) {
  return DataSplits{generate_split(config, config.data.train, seed, 0), generate_split(config, config.data.val, seed, 1),
                    generate_split(config, config.data.test, seed, 2)};
}

std::pair<CycleBatch, CycleBatch> split_id_ood(const RunConfig& config, const CycleBatch& test) {
  const std::vector<std::string> id = config.id_regimes();
  std::pair<CycleBatch, CycleBatch> out;
  for (const WeldCycle& c : test.cycles) {
    const bool in = std::find(id.begin(), id.end(), c.regime_tag) != id.end();
    (in ? out.first : out.second).cycles.push_back(c);
  }
  return out;
}

GenerateSummary cmd_generate(const RunConfig& config) {
  const DataSplits d = generate_splits(config, config.seed);
  write_text(config.out_dir / "train.csv", format_cycles_csv(d.train));
  write_text(config.out_dir / "val.csv", format_cycles_csv(d.val));
  write_text(config.out_dir / "test.csv", format_cycles_csv(d.test));
  write_resolved_config(config);
  return GenerateSummary{d.train.size(), d.val.size(), d.test.size()};
}

TrainSummary cmd_train(const RunConfig& config, const std::optional<std::filesystem::path>& data_dir) {
  CycleBatch train, val;
  if (data_dir) {
    train = load_cycles(*data_dir / "train.csv");
    val = load_cycles(*data_dir / "val.csv");
  } else {
    DataSplits d = generate_splits(config, config.seed);
    train = std::move(d.train);
    val = std::move(d.val);
  }
  TrainSummary s{train_pipeline(train, val, config.vq, config.ar, config.seed), 0.0, 0.0};
  const std::vector<int> preds = predict(s.result.bundle, val);
  const std::vector<int> labels = val.labels();
  s.val_accuracy = accuracy(preds, labels);
  s.val_f1 = f1(preds, labels);
  save_bundle(s.result.bundle, config.out_dir / "bundle.bin");
  write_text(config.out_dir / "training_history.csv", format_training_history_csv(s.result.ar_history));
  write_text(config.out_dir / "vq_history.csv", format_vq_history_csv(s.result.vq_trace));
  write_resolved_config(config);
  return s;
}

ThresholdDecision fit_method_threshold(const ModelBundle& bundle, const ScoreMethod& method, const CycleBatch& val) {
  const std::vector<double> scores = score_batch(method, bundle, val);
  return fit_threshold(scores, predict(bundle, val), val.labels());
}

ScoreMethod make_method(const RunConfig& config, ScoreKind kind, const ModelBundle& bundle, const CycleBatch& train) {
  ScoreMethod m;
  m.kind = kind;
  m.odin_temperature = config.benchmark.odin_temperature;
  m.odin_epsilon = config.benchmark.odin_epsilon;
  if (kind == ScoreKind::kMahalanobis) m.gaussian = fit_mahalanobis(bundle, train);
  return m;
}

double accepted_metric(MetricKind kind, const std::vector<int>& predictions, const std::vector<int>& labels,
                       const std::vector<bool>& flagged, std::size_t* accepted) {
  std::vector<int> p, l;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (!flagged[i]) {
      p.push_back(predictions[i]);
      l.push_back(labels[i]);
    }
  }
  if (accepted != nullptr) *accepted = p.size();
  return p.empty() ? 0.0 : metric(kind, p, l);
}

namespace {

void benchmark_one(const RunConfig& config, std::uint64_t seed, const ModelBundle& bundle, const DataSplits& data,
                   BenchmarkSummary& out) {
  const auto [id, ood] = split_id_ood(config, data.test);
  if (id.empty() || ood.empty()) throw ConfigError("benchmark needs test cycles from both ID and OOD regimes");
  const std::vector<int> id_pred = predict(bundle, id);
  const std::vector<int> ood_pred = predict(bundle, ood);
  const std::vector<int> id_lab = id.labels();
  const std::vector<int> ood_lab = ood.labels();
  const double beta = config.benchmark.beta;
  const MetricKind kinds[] = {MetricKind::kF1, MetricKind::kAccuracy};

  const auto add_row = [&](const std::string& method, double theta, const std::vector<bool>& id_flag,
                           const std::vector<bool>& ood_flag, std::optional<double> auc) {
    for (MetricKind k : kinds) {
      BenchmarkRow r;
      r.seed = seed;
      r.method = method;
      r.metric = k;
      r.beta = beta;
      r.theta = theta;
      r.id_total = id.size();
      r.ood_total = ood.size();
      r.id_value = accepted_metric(k, id_pred, id_lab, id_flag, &r.id_accepted);
      r.ood_value = accepted_metric(k, ood_pred, ood_lab, ood_flag, &r.ood_accepted);
      if (r.id_value > 0.0) r.ood_score = ood_score(OodScoreInputs{r.id_value, r.ood_value, beta});
      r.auroc = auc;
      out.rows.push_back(r);
      if (seed == config.benchmark.seeds.front() || config.benchmark.seeds.size() == 1) {
        out.metrics.push_back({"id_test", method, to_string(k), r.id_value});
        out.metrics.push_back({"ood_test", method, to_string(k), r.ood_value});
      }
    }
  };

  add_row("none", kPlusInfinity, std::vector<bool>(id.size(), false), std::vector<bool>(ood.size(), false),
          std::nullopt);
  for (ScoreKind kind : config.benchmark.methods) {
    const std::string name = to_string(kind);
    std::optional<ThresholdDecision> decision;
    ScoreMethod method;
    try {
      method = make_method(config, kind, bundle, data.train);
      decision = fit_method_threshold(bundle, method, data.val);
    } catch (const UndefinedMetricError&) {
      // Degenerate validation partition or singular covariance: nothing to threshold.
    }
    if (!decision) {
      for (MetricKind k : kinds) {
        BenchmarkRow r;
        r.seed = seed;
        r.method = name;
        r.metric = k;
        r.beta = beta;
        r.theta = std::numeric_limits<double>::quiet_NaN();
        r.id_total = id.size();
        r.ood_total = ood.size();
        out.rows.push_back(r);
      }
      continue;
    }
    const std::vector<double> id_scores = score_batch(method, bundle, id);
    const std::vector<double> ood_scores = score_batch(method, bundle, ood);
    std::vector<double> all(id_scores);
    all.insert(all.end(), ood_scores.begin(), ood_scores.end());
    std::vector<bool> is_ood(id_scores.size(), false);
    is_ood.resize(all.size(), true);
    const double auc = auroc(all, is_ood);
    if (seed == config.benchmark.seeds.front() || config.benchmark.seeds.size() == 1) {
      out.metrics.push_back({"id_vs_ood", name, "auroc", auc});
    }
    add_row(name, decision->theta, flag_ood(id_scores, decision->theta), flag_ood(ood_scores, decision->theta), auc);
  }
}

}  // namespace

BenchmarkSummary cmd_benchmark(const RunConfig& config, const std::optional<ModelBundle>& bundle) {
  BenchmarkSummary out;
  if (bundle) {
    RunConfig single = config;
    single.benchmark.seeds = {config.seed};
    benchmark_one(single, config.seed, *bundle, generate_splits(config, config.seed), out);
  } else {
    for (std::uint64_t seed : config.benchmark.seeds) {
      const DataSplits data = generate_splits(config, seed);
      const PipelineTrainResult trained = train_pipeline(data.train, data.val, config.vq, config.ar, seed);
      benchmark_one(config, seed, trained.bundle, data, out);
    }
  }
  write_text(config.out_dir / "benchmark.csv", format_benchmark_csv(out.rows));
  write_text(config.out_dir / "metrics.csv", format_metric_rows_csv(out.metrics));
  write_resolved_config(config);
  return out;
}

DeploySummary cmd_deploy(const RunConfig& config, const std::optional<ModelBundle>& bundle) {
  if (config.deploy.schedule.empty()) throw ConfigError("deploy.schedule is empty");
  const DataSplits data = generate_splits(config, config.seed);
  const ModelBundle initial =
      bundle ? *bundle : train_pipeline(data.train, data.val, config.vq, config.ar, config.seed).bundle;

  const ScoreMethod method = make_method(config, config.deploy.method, initial, data.train);
  DeploySummary s;
  s.theta = fit_method_threshold(initial, method, data.val).theta;

  std::vector<std::pair<ProcessParams, int>> schedule;
  for (const StreamBlock& b : config.deploy.schedule) schedule.emplace_back(config.regime(b.regime), b.experiences);
  const std::vector<Experience> stream =
      build_stream(schedule, config.deploy.cycles_per_experience, config.seed * 31 + 7);

  for (Strategy st : {Strategy::kNoCl, Strategy::kReplayAlways, Strategy::kOodReplay}) {
    s.reports.push_back(
        run_deployment(st, stream, initial, method, s.theta, data.train, config.deploy.deployment, config.seed));
  }
  try {
    s.label_savings = label_savings(s.reports[2], s.reports[1]);
  } catch (const UndefinedMetricError&) {
    s.label_savings.reset();
  }

  write_text(config.out_dir / "deployment.csv", format_deployment_csv(s.reports));
  write_text(config.out_dir / "deployment.svg", render_deployment_svg(s.reports));
  nlohmann::ordered_json j;
  j["method"] = to_string(method.kind);
  j["scope"] = to_string(config.deploy.deployment.update.scope);
  j["theta"] = format_number(s.theta);
  j["trigger_fraction"] = config.deploy.deployment.trigger_fraction;
  j["experiences"] = stream.size();
  for (const DeploymentReport& r : s.reports) {
    const std::size_t window = std::min(config.deploy.tail_window, r.records.size());
    j["strategies"][to_string(r.strategy)] = {{"triggers", r.trigger_count()},
                                              {"labels_consumed", r.labels_consumed()},
                                              {"tail_mean_f1", r.tail_mean_f1(window)}};
  }
  if (s.label_savings) {
    j["label_savings"] = *s.label_savings;
  } else {
    j["label_savings"] = "undefined";
  }
  write_text(config.out_dir / "deploy_summary.json", j.dump(2) + "\n");
  write_resolved_config(config);
  return s;
}

}  // namespace weldood
