#pragma once

// Trained pipelines shared across test cases. Each is built once per process.

#include "weldood/commands.hpp"

namespace fixture {

/// Default configuration, data and weights from seed 1.
struct Trained {
  weldood::RunConfig config;
  weldood::DataSplits data;
  weldood::PipelineTrainResult result;
};

inline const Trained& default_seed1() {
  static const Trained t = [] {
    Trained x;
    x.config = weldood::default_run_config();
    x.data = weldood::generate_splits(x.config, 1);
    x.result = weldood::train_pipeline(x.data.train, x.data.val, x.config.vq, x.config.ar, 1);
    return x;
  }();
  return t;
}

/// A fast configuration: small splits, few epochs, narrow transformer.
inline weldood::RunConfig tiny_config() {
  weldood::RunConfig c = weldood::default_run_config();
  c.data.train = {{"A", 48}};
  c.data.val = {{"A", 24}};
  c.data.test = {{"A", 16}, {"B", 16}};
  c.vq.epochs = 3;
  c.vq.codebook_size = 16;
  c.ar.vocab = 16;
  c.ar.model_dim = 16;
  c.ar.ffn_dim = 32;
  c.ar.layers = 1;
  c.ar.ar_epochs = 2;
  c.ar.cls_interval = 1;
  c.ar.cls_epochs_per_interval = 1;
  c.ar.finetune_epochs = 1;
  c.benchmark.seeds = {1, 2};
  c.deploy.schedule = {{"A", 2}, {"C", 2}};
  c.deploy.cycles_per_experience = 10;
  c.deploy.deployment.update.epochs = 1;
  return c;
}

inline const Trained& tiny() {
  static const Trained t = [] {
    Trained x;
    x.config = tiny_config();
    x.data = weldood::generate_splits(x.config, 3);
    x.result = weldood::train_pipeline(x.data.train, x.data.val, x.config.vq, x.config.ar, 3);
    return x;
  }();
  return t;
}

}  // namespace fixture
