#include "weldood/run_config.hpp"

#include "weldood/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace weldood {

namespace {

using Json = nlohmann::ordered_json;

// Checks that every key of `j` is in `allowed`.
void require_keys(const Json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const Json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

void read_pair(const Json& j, const char* key, std::array<double, kChannels>& out, const std::string& where) {
  if (!j.contains(key)) return;
  const Json& v = j.at(key);
  if (!v.is_array() || v.size() != kChannels || !v[0].is_number() || !v[1].is_number()) {
    throw ConfigError(where + "." + key + ": expected [current, voltage]");
  }
  out = {v[0].get<double>(), v[1].get<double>()};
}

ProcessParams parse_regime(const Json& j, const std::string& name) {
  const std::string where = "regimes." + name;
  require_keys(j, where,
               {"base_amplitude", "pulse_period", "pulse_duty", "shape", "noise_std", "drift_slope", "cycle_length",
                "amplitude_jitter", "quality_tolerance"});
  ProcessParams p;
  p.name = name;
  read_pair(j, "base_amplitude", p.base_amplitude, where);
  read(j, "pulse_period", p.pulse_period, where);
  read(j, "pulse_duty", p.pulse_duty, where);
  if (j.contains("shape")) {
    std::string s;
    read(j, "shape", s, where);
    p.shape = parse_waveform_shape(s);
  }
  read_pair(j, "noise_std", p.noise_std, where);
  read(j, "drift_slope", p.drift_slope, where);
  read(j, "cycle_length", p.cycle_length, where);
  read(j, "amplitude_jitter", p.amplitude_jitter, where);
  read(j, "quality_tolerance", p.quality_tolerance, where);
  return p;
}

Json regime_json(const ProcessParams& p) {
  return Json{{"base_amplitude", p.base_amplitude},   {"pulse_period", p.pulse_period},
              {"pulse_duty", p.pulse_duty},           {"shape", to_string(p.shape)},
              {"noise_std", p.noise_std},             {"drift_slope", p.drift_slope},
              {"cycle_length", p.cycle_length},       {"amplitude_jitter", p.amplitude_jitter},
              {"quality_tolerance", p.quality_tolerance}};
}

std::vector<SplitBlock> parse_split(const Json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array of {regime, count}");
  std::vector<SplitBlock> out;
  for (const Json& b : j) {
    require_keys(b, where, {"regime", "count"});
    SplitBlock block;
    read(b, "regime", block.regime, where);
    read(b, "count", block.count, where);
    out.push_back(block);
  }
  return out;
}

Json split_json(const std::vector<SplitBlock>& blocks) {
  Json arr = Json::array();
  for (const SplitBlock& b : blocks) arr.push_back(Json{{"regime", b.regime}, {"count", b.count}});
  return arr;
}

void parse_vq(const Json& j, VqConfig& c) {
  require_keys(j, "vq",
               {"codebook_size", "embedding_dim", "downsample", "conv_channels", "hidden", "commitment_beta", "epochs",
                "batch_size", "learning_rate"});
  read(j, "codebook_size", c.codebook_size, "vq");
  read(j, "embedding_dim", c.embedding_dim, "vq");
  read(j, "downsample", c.downsample, "vq");
  read(j, "conv_channels", c.conv_channels, "vq");
  read(j, "hidden", c.hidden, "vq");
  read(j, "commitment_beta", c.commitment_beta, "vq");
  read(j, "epochs", c.epochs, "vq");
  read(j, "batch_size", c.batch_size, "vq");
  read(j, "learning_rate", c.learning_rate, "vq");
}

Json vq_json(const VqConfig& c) {
  return Json{{"codebook_size", c.codebook_size}, {"embedding_dim", c.embedding_dim},
              {"downsample", c.downsample},       {"conv_channels", c.conv_channels},
              {"hidden", c.hidden},               {"commitment_beta", c.commitment_beta},
              {"epochs", c.epochs},               {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate}};
}

void parse_ar(const Json& j, ArConfig& c) {
  require_keys(j, "ar",
               {"context_length", "layers", "heads", "model_dim", "ffn_dim", "ar_learning_rate", "cls_learning_rate",
                "batch_size", "ar_epochs", "cls_interval", "cls_epochs_per_interval", "finetune_epochs"});
  read(j, "context_length", c.context_length, "ar");
  read(j, "layers", c.layers, "ar");
  read(j, "heads", c.heads, "ar");
  read(j, "model_dim", c.model_dim, "ar");
  read(j, "ffn_dim", c.ffn_dim, "ar");
  read(j, "ar_learning_rate", c.ar_learning_rate, "ar");
  read(j, "cls_learning_rate", c.cls_learning_rate, "ar");
  read(j, "batch_size", c.batch_size, "ar");
  read(j, "ar_epochs", c.ar_epochs, "ar");
  read(j, "cls_interval", c.cls_interval, "ar");
  read(j, "cls_epochs_per_interval", c.cls_epochs_per_interval, "ar");
  read(j, "finetune_epochs", c.finetune_epochs, "ar");
}

Json ar_json(const ArConfig& c) {
  return Json{{"context_length", c.context_length},
              {"layers", c.layers},
              {"heads", c.heads},
              {"model_dim", c.model_dim},
              {"ffn_dim", c.ffn_dim},
              {"ar_learning_rate", c.ar_learning_rate},
              {"cls_learning_rate", c.cls_learning_rate},
              {"batch_size", c.batch_size},
              {"ar_epochs", c.ar_epochs},
              {"cls_interval", c.cls_interval},
              {"cls_epochs_per_interval", c.cls_epochs_per_interval},
              {"finetune_epochs", c.finetune_epochs}};
}

void parse_benchmark(const Json& j, BenchmarkConfig& c) {
  require_keys(j, "benchmark", {"methods", "seeds", "beta", "odin_temperature", "odin_epsilon"});
  if (j.contains("methods")) {
    std::vector<std::string> names;
    read(j, "methods", names, "benchmark");
    c.methods.clear();
    for (const std::string& n : names) c.methods.push_back(parse_score_kind(n));
  }
  read(j, "seeds", c.seeds, "benchmark");
  read(j, "beta", c.beta, "benchmark");
  read(j, "odin_temperature", c.odin_temperature, "benchmark");
  read(j, "odin_epsilon", c.odin_epsilon, "benchmark");
}

Json benchmark_json(const BenchmarkConfig& c) {
  Json methods = Json::array();
  for (ScoreKind k : c.methods) methods.push_back(to_string(k));
  return Json{{"methods", methods},
              {"seeds", c.seeds},
              {"beta", c.beta},
              {"odin_temperature", c.odin_temperature},
              {"odin_epsilon", c.odin_epsilon}};
}

void parse_update(const Json& j, UpdateConfig& c) {
  require_keys(j, "deploy.update", {"epochs", "buffer_mix", "buffer_capacity", "learning_rate", "batch_size", "scope"});
  read(j, "epochs", c.epochs, "deploy.update");
  read(j, "buffer_mix", c.buffer_mix, "deploy.update");
  read(j, "buffer_capacity", c.buffer_capacity, "deploy.update");
  read(j, "learning_rate", c.learning_rate, "deploy.update");
  read(j, "batch_size", c.batch_size, "deploy.update");
  if (j.contains("scope")) {
    std::string s;
    read(j, "scope", s, "deploy.update");
    c.scope = parse_update_scope(s);
  }
}

void parse_deploy(const Json& j, DeployConfig& c) {
  require_keys(j, "deploy",
               {"method", "cycles_per_experience", "schedule", "trigger_fraction", "tail_window", "update"});
  if (j.contains("method")) {
    std::string s;
    read(j, "method", s, "deploy");
    c.method = parse_score_kind(s);
  }
  read(j, "cycles_per_experience", c.cycles_per_experience, "deploy");
  read(j, "trigger_fraction", c.deployment.trigger_fraction, "deploy");
  read(j, "tail_window", c.tail_window, "deploy");
  if (j.contains("schedule")) {
    const Json& s = j.at("schedule");
    if (!s.is_array()) throw ConfigError("deploy.schedule: expected an array of {regime, experiences}");
    c.schedule.clear();
    for (const Json& b : s) {
      require_keys(b, "deploy.schedule", {"regime", "experiences"});
      StreamBlock block;
      read(b, "regime", block.regime, "deploy.schedule");
      read(b, "experiences", block.experiences, "deploy.schedule");
      c.schedule.push_back(block);
    }
  }
  if (j.contains("update")) parse_update(j.at("update"), c.deployment.update);
}

Json deploy_json(const DeployConfig& c) {
  Json schedule = Json::array();
  for (const StreamBlock& b : c.schedule) schedule.push_back(Json{{"regime", b.regime}, {"experiences", b.experiences}});
  const UpdateConfig& u = c.deployment.update;
  return Json{{"method", to_string(c.method)},
              {"cycles_per_experience", c.cycles_per_experience},
              {"schedule", schedule},
              {"trigger_fraction", c.deployment.trigger_fraction},
              {"tail_window", c.tail_window},
              {"update", Json{{"epochs", u.epochs},
                              {"buffer_mix", u.buffer_mix},
                              {"buffer_capacity", u.buffer_capacity},
                              {"learning_rate", u.learning_rate},
                              {"batch_size", u.batch_size},
                              {"scope", to_string(u.scope)}}}};
}

}  // namespace

const ProcessParams& RunConfig::regime(const std::string& name) const {
  const auto it = regimes.find(name);
  if (it == regimes.end()) throw ConfigError("undefined regime '" + name + "'");
  return it->second;
}

std::vector<std::string> RunConfig::id_regimes() const {
  std::vector<std::string> out;
  for (const SplitBlock& b : data.train) {
    if (std::find(out.begin(), out.end(), b.regime) == out.end()) out.push_back(b.regime);
  }
  return out;
}

void RunConfig::validate() const {
  if (regimes.empty()) throw ConfigError("no regimes defined");
  for (const auto& [name, p] : regimes) {
    if (name.empty()) throw ConfigError("regime names must be nonempty");
    p.validate();
  }
  const auto check_split = [&](const std::vector<SplitBlock>& blocks, const char* which, bool required) {
    if (required && blocks.empty()) throw ConfigError(std::string("data.") + which + " is empty");
    for (const SplitBlock& b : blocks) {
      regime(b.regime);
      if (b.count < 1) throw ConfigError(std::string("data.") + which + ": count must be >= 1");
    }
  };
  check_split(data.train, "train", true);
  check_split(data.val, "val", true);
  check_split(data.test, "test", false);
  vq.validate();
  ArConfig ar_check = ar;
  ar_check.vocab = vq.codebook_size;
  ar_check.validate();
  if (benchmark.seeds.empty()) throw ConfigError("benchmark.seeds is empty");
  if (!(benchmark.beta > 0.0)) throw ConfigError("benchmark.beta must be > 0");
  ScoreMethod probe;
  probe.odin_temperature = benchmark.odin_temperature;
  probe.odin_epsilon = benchmark.odin_epsilon;
  probe.validate();
  if (deploy.cycles_per_experience < 1) throw ConfigError("deploy.cycles_per_experience must be >= 1");
  for (const StreamBlock& b : deploy.schedule) {
    regime(b.regime);
    if (b.experiences < 1) throw ConfigError("deploy.schedule: experiences must be >= 1");
  }
  const double q = deploy.deployment.trigger_fraction;
  if (!(q > 0.0 && q <= 1.0)) throw ConfigError("deploy.trigger_fraction must lie in (0, 1]");
  if (deploy.tail_window < 1) throw ConfigError("deploy.tail_window must be >= 1");
  deploy.deployment.update.validate();
}

RunConfig default_run_config() {
  RunConfig c;
  ProcessParams a;
  a.name = "A";
  ProcessParams b = a;
  b.name = "B";
  b.base_amplitude = {3.0, 1.8};
  b.shape = WaveformShape::kSawtooth;
  ProcessParams cc = a;
  cc.name = "C";
  cc.base_amplitude = {1.4, 0.6};
  cc.pulse_period = 12.0;
  ProcessParams d = a;
  d.name = "D";
  d.base_amplitude = {1.4, 0.9};
  d.pulse_period = 10.0;
  d.shape = WaveformShape::kSmoothed;
  c.regimes = {{"A", a}, {"B", b}, {"C", cc}, {"D", d}};
  c.data.train = {{"A", 400}};
  c.data.val = {{"A", 150}};
  c.data.test = {{"A", 150}, {"B", 150}};
  c.benchmark.methods = all_score_kinds();
  c.deploy.schedule = {{"A", 6}, {"C", 7}, {"D", 7}};
  return c;
}

RunConfig parse_run_config(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  require_keys(j, "config", {"seed", "out_dir", "regimes", "data", "vq", "ar", "benchmark", "deploy"});
  RunConfig c = default_run_config();
  read(j, "seed", c.seed, "config");
  if (j.contains("out_dir")) {
    std::string s;
    read(j, "out_dir", s, "config");
    c.out_dir = s;
  }
  if (j.contains("regimes")) {
    const Json& r = j.at("regimes");
    if (!r.is_object()) throw ConfigError("regimes: expected an object keyed by regime name");
    c.regimes.clear();
    for (const auto& [name, value] : r.items()) c.regimes[name] = parse_regime(value, name);
  }
  if (j.contains("data")) {
    const Json& d = j.at("data");
    require_keys(d, "data", {"train", "val", "test"});
    if (d.contains("train")) c.data.train = parse_split(d.at("train"), "data.train");
    if (d.contains("val")) c.data.val = parse_split(d.at("val"), "data.val");
    if (d.contains("test")) c.data.test = parse_split(d.at("test"), "data.test");
  }
  if (j.contains("vq")) parse_vq(j.at("vq"), c.vq);
  if (j.contains("ar")) parse_ar(j.at("ar"), c.ar);
  if (j.contains("benchmark")) parse_benchmark(j.at("benchmark"), c.benchmark);
  if (j.contains("deploy")) parse_deploy(j.at("deploy"), c.deploy);
  c.ar.vocab = c.vq.codebook_size;
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string format_run_config(const RunConfig& c) {
  Json regimes = Json::object();
  for (const auto& [name, p] : c.regimes) regimes[name] = regime_json(p);
  Json j{{"seed", c.seed},
         {"out_dir", c.out_dir.string()},
         {"regimes", regimes},
         {"data", Json{{"train", split_json(c.data.train)},
                       {"val", split_json(c.data.val)},
                       {"test", split_json(c.data.test)}}},
         {"vq", vq_json(c.vq)},
         {"ar", ar_json(c.ar)},
         {"benchmark", benchmark_json(c.benchmark)},
         {"deploy", deploy_json(c.deploy)}};
  return j.dump(2) + "\n";
}

}  // namespace weldood
