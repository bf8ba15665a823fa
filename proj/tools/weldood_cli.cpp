// weldood: generate data, train, score, threshold, benchmark and simulate
// deployment. Exit codes: 0 ok, 2 config error, 3 data error, 4 divergence.

#include "weldood/commands.hpp"
#include "weldood/errors.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

namespace {

struct Common {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::string method;
  std::string bundle_path;
};

void add_common(CLI::App* cmd, Common& c, bool with_bundle) {
  cmd->add_option("--config", c.config_path, "JSON run configuration (defaults apply when omitted)");
  cmd->add_option("--out", c.out_dir, "output directory (overrides config out_dir)");
  cmd->add_option("--seed", c.seed, "seed (overrides config seed)");
  cmd->add_option("--method", c.method, "score method: ar_nll, recon, quant, msp, odin, mahalanobis");
  if (with_bundle) cmd->add_option("--bundle", c.bundle_path, "trained bundle.bin to use instead of training");
}

weldood::RunConfig resolve(const Common& c) {
  weldood::RunConfig cfg = c.config_path.empty() ? weldood::default_run_config()
                                                 : weldood::load_run_config(c.config_path);
  if (!c.out_dir.empty()) cfg.out_dir = c.out_dir;
  if (c.seed) cfg.seed = *c.seed;
  if (!c.method.empty()) {
    const weldood::ScoreKind kind = weldood::parse_score_kind(c.method);
    cfg.benchmark.methods = {kind};
    cfg.deploy.method = kind;
  }
  cfg.validate();
  return cfg;
}

std::optional<weldood::ModelBundle> maybe_bundle(const Common& c) {
  if (c.bundle_path.empty()) return std::nullopt;
  return weldood::load_bundle(c.bundle_path);
}

int run(int argc, char** argv) {
  CLI::App app{"OOD detection and OOD-gated replay for welding-cycle classification"};
  app.require_subcommand(1);

  Common gen_opts, train_opts, bench_opts, deploy_opts, score_opts, thr_opts;
  std::string data_dir, input_path;

  auto* gen = app.add_subcommand("generate", "write train/val/test CSVs");
  add_common(gen, gen_opts, false);

  auto* train = app.add_subcommand("train", "train the VQ-VAE and transformer, write bundle and history");
  add_common(train, train_opts, false);
  train->add_option("--data", data_dir, "directory holding train.csv and val.csv (generated when omitted)");

  auto* bench = app.add_subcommand("benchmark", "ID/OOD performance and OOD-Score per method and seed");
  add_common(bench, bench_opts, true);

  auto* deploy = app.add_subcommand("deploy", "simulate no_cl, replay and ood_replay over the stream");
  add_common(deploy, deploy_opts, true);

  auto* score = app.add_subcommand("score", "per-cycle OOD scores for a CSV");
  add_common(score, score_opts, true);
  score->add_option("--input", input_path, "cycle CSV")->required();

  auto* thr = app.add_subcommand("threshold", "fit the Youden threshold on a labelled validation CSV");
  add_common(thr, thr_opts, true);
  thr->add_option("--input", input_path, "labelled validation CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : weldood::kExitConfig;
  }

  if (gen->parsed()) {
    const weldood::RunConfig cfg = resolve(gen_opts);
    const weldood::GenerateSummary s = weldood::cmd_generate(cfg);
    std::printf("wrote %zu train, %zu val, %zu test cycles to %s\n", s.train, s.val, s.test,
                cfg.out_dir.string().c_str());
  } else if (train->parsed()) {
    const weldood::RunConfig cfg = resolve(train_opts);
    std::optional<std::filesystem::path> dir;
    if (!data_dir.empty()) dir = data_dir;
    const weldood::TrainSummary s = weldood::cmd_train(cfg, dir);
    std::printf("epochs %zu  val_accuracy %.4f  val_f1 %.4f\n", s.result.ar_history.size(), s.val_accuracy, s.val_f1);
  } else if (bench->parsed()) {
    const weldood::RunConfig cfg = resolve(bench_opts);
    const weldood::BenchmarkSummary s = weldood::cmd_benchmark(cfg, maybe_bundle(bench_opts));
    for (const weldood::BenchmarkRow& r : s.rows) {
      if (r.metric != weldood::MetricKind::kF1) continue;
      std::printf("seed %llu %-12s id_f1 %.3f ood_f1 %.3f ood_score %s auroc %s\n",
                  static_cast<unsigned long long>(r.seed), r.method.c_str(), r.id_value, r.ood_value,
                  r.ood_score ? weldood::format_number(*r.ood_score).c_str() : "undefined",
                  r.auroc ? weldood::format_number(*r.auroc).c_str() : "-");
    }
  } else if (deploy->parsed()) {
    const weldood::RunConfig cfg = resolve(deploy_opts);
    const weldood::DeploySummary s = weldood::cmd_deploy(cfg, maybe_bundle(deploy_opts));
    std::printf("theta %s\n", weldood::format_number(s.theta).c_str());
    for (const weldood::DeploymentReport& r : s.reports) {
      std::printf("%-10s triggers %zu labels %zu final-%zu F1 %.3f\n", weldood::to_string(r.strategy).c_str(),
                  r.trigger_count(), r.labels_consumed(), cfg.deploy.tail_window,
                  r.tail_mean_f1(cfg.deploy.tail_window));
    }
    if (s.label_savings) {
      std::printf("label_savings %.4f\n", *s.label_savings);
    } else {
      std::printf("label_savings undefined (replay consumed no labels)\n");
    }
  } else if (score->parsed() || thr->parsed()) {
    Common& opts = score->parsed() ? score_opts : thr_opts;
    const weldood::RunConfig cfg = resolve(opts);
    if (opts.bundle_path.empty()) throw weldood::ConfigError("--bundle is required");
    const weldood::ModelBundle bundle = weldood::load_bundle(opts.bundle_path);
    const weldood::CycleBatch batch = weldood::load_cycles(input_path);
    const weldood::ScoreKind kind = opts.method.empty() ? weldood::ScoreKind::kArNll
                                                        : weldood::parse_score_kind(opts.method);
    std::optional<weldood::CycleBatch> fit_data;
    if (kind == weldood::ScoreKind::kMahalanobis) {
      if (score->parsed()) throw weldood::ConfigError("mahalanobis scoring needs the threshold command's labelled input");
      fit_data = batch;
    }
    const weldood::ScoreMethod method =
        weldood::make_method(cfg, kind, bundle, fit_data ? *fit_data : weldood::CycleBatch{});
    if (score->parsed()) {
      weldood::write_text(cfg.out_dir / "scores.csv",
                          weldood::format_scores_csv(batch, kind, weldood::score_batch(method, bundle, batch)));
      std::printf("scored %zu cycles\n", batch.size());
    } else {
      const weldood::ThresholdDecision d = weldood::fit_method_threshold(bundle, method, batch);
      weldood::write_text(cfg.out_dir / "threshold.json", weldood::format_threshold_json(weldood::to_string(kind), d));
      std::printf("theta %s  J %.4f\n", weldood::format_number(d.theta).c_str(), d.j_statistic);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const weldood::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return weldood::kExitConfig;
  } catch (const weldood::TrainingError& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return weldood::kExitDivergence;
  } catch (const weldood::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return weldood::kExitData;
  } catch (const weldood::UndefinedMetricError& e) {
    std::cerr << "undefined metric: " << e.what() << '\n';
    return weldood::kExitData;
  }
}
