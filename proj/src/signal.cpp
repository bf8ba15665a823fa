#include "weldood/signal.hpp"

#include "weldood/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <unordered_map>

namespace weldood {

void validate(const WeldCycle& cycle) {
  if (cycle.current.size() != cycle.voltage.size()) {
    throw DataError("cycle " + cycle.cycle_id + ": channel lengths differ");
  }
  if (cycle.current.size() < kMinCycleLength) {
    throw DataError("cycle " + cycle.cycle_id + ": fewer than 8 samples");
  }
  for (int c = 0; c < kChannels; ++c) {
    for (double v : cycle.channel(c)) {
      if (!std::isfinite(v)) {
        throw DataError("cycle " + cycle.cycle_id + ": non-finite sample");
      }
    }
  }
  if (cycle.label && *cycle.label != 0 && *cycle.label != 1) {
    throw DataError("cycle " + cycle.cycle_id + ": label must be 0 or 1");
  }
}

std::vector<int> CycleBatch::labels() const {
  std::vector<int> out;
  out.reserve(cycles.size());
  for (const WeldCycle& c : cycles) {
    if (!c.label) {
      throw DataError("cycle " + c.cycle_id + " has no label");
    }
    out.push_back(*c.label);
  }
  return out;
}

std::string to_string(WaveformShape shape) {
  switch (shape) {
    case WaveformShape::kSquare:
      return "square";
    case WaveformShape::kSawtooth:
      return "sawtooth";
    case WaveformShape::kSmoothed:
      return "smoothed";
  }
  return "square";
}

WaveformShape parse_waveform_shape(const std::string& name) {
  if (name == "square") return WaveformShape::kSquare;
  if (name == "sawtooth") return WaveformShape::kSawtooth;
  if (name == "smoothed") return WaveformShape::kSmoothed;
  throw ConfigError("unknown waveform shape '" + name + "'");
}

void ProcessParams::validate() const {
  if (!(pulse_period >= 4.0)) throw ConfigError("pulse_period must be >= 4");
  if (!(pulse_duty > 0.0 && pulse_duty < 1.0)) throw ConfigError("pulse_duty must lie in (0, 1)");
  for (int c = 0; c < kChannels; ++c) {
    if (!(noise_std[c] >= 0.0)) throw ConfigError("noise_std must be >= 0");
    if (!std::isfinite(base_amplitude[c])) throw ConfigError("base_amplitude must be finite");
  }
  if (!std::isfinite(drift_slope)) throw ConfigError("drift_slope must be finite");
  if (cycle_length < static_cast<int>(kMinCycleLength)) throw ConfigError("cycle_length must be >= 8");
  if (!(amplitude_jitter >= 0.0)) throw ConfigError("amplitude_jitter must be >= 0");
  if (!(quality_tolerance >= 0.0)) throw ConfigError("quality_tolerance must be >= 0");
}

std::uint64_t ProcessParams::hash() const {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%.17g|%.17g|%.17g|%.17g|%s|%.17g|%.17g|%.17g|%d|%.17g|%.17g", base_amplitude[0],
                base_amplitude[1], pulse_period, pulse_duty, to_string(shape).c_str(), noise_std[0], noise_std[1],
                drift_slope, cycle_length, amplitude_jitter, quality_tolerance);
  std::uint64_t h = 1469598103934665603ULL;
  for (const char* p = buf; *p != '\0'; ++p) {
    h ^= static_cast<unsigned char>(*p);
    h *= 1099511628211ULL;
  }
  return h;
}

std::string ProcessParams::regime_tag() const {
  if (!name.empty()) {
    return name;
  }
  char buf[24];
  std::snprintf(buf, sizeof buf, "p%016llx", static_cast<unsigned long long>(hash()));
  return buf;
}

double pulse_shape(const ProcessParams& params, double t) {
  const double u = std::fmod(t, params.pulse_period) / params.pulse_period;
  if (u >= params.pulse_duty) {
    return 0.0;
  }
  const double on = u / params.pulse_duty;
  switch (params.shape) {
    case WaveformShape::kSquare:
      return 1.0;
    case WaveformShape::kSawtooth:
      return on;
    case WaveformShape::kSmoothed:
      return std::sin(std::numbers::pi * on);
  }
  return 0.0;
}

CycleBatch generate_cycles(const ProcessParams& params, int count, std::uint64_t seed) {
  params.validate();
  if (count < 1) {
    throw ConfigError("count must be >= 1");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::string tag = params.regime_tag();
  const auto n = static_cast<std::size_t>(params.cycle_length);

  CycleBatch batch;
  batch.cycles.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    WeldCycle cycle;
    const double factor = 1.0 + params.amplitude_jitter * normal(rng);
    cycle.label = std::abs(factor - 1.0) <= params.quality_tolerance ? 1 : 0;
    cycle.current.resize(n);
    cycle.voltage.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
      const double w = pulse_shape(params, static_cast<double>(t));
      const double drift = params.drift_slope * static_cast<double>(t);
      // Voltage sags while the current pulse is on.
      cycle.current[t] = params.base_amplitude[0] * factor * w + drift + params.noise_std[0] * normal(rng);
      cycle.voltage[t] = params.base_amplitude[1] * factor * (1.0 - w) + drift + params.noise_std[1] * normal(rng);
    }
    char id[64];
    std::snprintf(id, sizeof id, "_%llu_%05d", static_cast<unsigned long long>(seed), i);
    cycle.cycle_id = tag + id;
    cycle.regime_tag = tag;
    batch.cycles.push_back(std::move(cycle));
  }
  return batch;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(field);
      field.clear();
    } else if (ch != '\r') {
      field.push_back(ch);
    }
  }
  out.push_back(field);
  return out;
}

double parse_number(const std::string& text, std::size_t row, const std::string& column) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  while (begin < end && *begin == ' ') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || begin == end) {
    throw DataError("row " + std::to_string(row) + ": non-numeric value '" + text + "' in column " + column);
  }
  if (!std::isfinite(value)) {
    throw DataError("row " + std::to_string(row) + ": non-finite value in column " + column);
  }
  return value;
}

std::string fmt9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

CycleBatch parse_cycles_csv(const std::string& text, const CsvSchema& schema) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.find_first_not_of(" \r\n\t") == std::string::npos) {
    throw DataError("empty input: no header row");
  }
  const std::vector<std::string> header = split_csv_line(line);
  auto find_column = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    return -1;
  };
  const int col_id = find_column(schema.cycle_id);
  const int col_t = find_column(schema.t);
  const int col_cur = find_column(schema.current);
  const int col_vol = find_column(schema.voltage);
  const int col_label = find_column(schema.label);
  const int col_regime = find_column(schema.regime);
  for (const auto& [col, name] : {std::pair{col_id, schema.cycle_id}, std::pair{col_t, schema.t},
                                  std::pair{col_cur, schema.current}, std::pair{col_vol, schema.voltage}}) {
    if (col < 0) {
      throw DataError("missing required column '" + name + "'");
    }
  }

  CycleBatch batch;
  std::unordered_map<std::string, std::size_t> index_of;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") {
      continue;
    }
    ++row;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw DataError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    }
    const std::string& id = fields[static_cast<std::size_t>(col_id)];
    parse_number(fields[static_cast<std::size_t>(col_t)], row, schema.t);
    const double current = parse_number(fields[static_cast<std::size_t>(col_cur)], row, schema.current);
    const double voltage = parse_number(fields[static_cast<std::size_t>(col_vol)], row, schema.voltage);
    std::optional<int> label;
    if (col_label >= 0 && !fields[static_cast<std::size_t>(col_label)].empty()) {
      const double l = parse_number(fields[static_cast<std::size_t>(col_label)], row, schema.label);
      if (l != 0.0 && l != 1.0) {
        throw DataError("row " + std::to_string(row) + ": label must be 0 or 1");
      }
      label = static_cast<int>(l);
    }

    auto [it, inserted] = index_of.try_emplace(id, batch.cycles.size());
    if (inserted) {
      WeldCycle cycle;
      cycle.cycle_id = id;
      cycle.label = label;
      if (col_regime >= 0) {
        cycle.regime_tag = fields[static_cast<std::size_t>(col_regime)];
      }
      batch.cycles.push_back(std::move(cycle));
    }
    WeldCycle& cycle = batch.cycles[it->second];
    if (cycle.label != label) {
      throw DataError("row " + std::to_string(row) + ": label differs within cycle " + id);
    }
    cycle.current.push_back(current);
    cycle.voltage.push_back(voltage);
  }
  if (batch.cycles.empty()) {
    throw DataError("empty input: header without data rows");
  }
  for (const WeldCycle& c : batch.cycles) {
    validate(c);
  }
  return batch;
}

CycleBatch load_cycles(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_cycles_csv(buf.str(), schema);
}

std::string format_cycles_csv(const CycleBatch& batch) {
  std::string out = "cycle_id,t,current,voltage,label,regime\n";
  for (const WeldCycle& c : batch.cycles) {
    const std::string label = c.label ? std::to_string(*c.label) : std::string();
    for (std::size_t t = 0; t < c.length(); ++t) {
      out += c.cycle_id;
      out += ',';
      out += std::to_string(t);
      out += ',';
      out += fmt9(c.current[t]);
      out += ',';
      out += fmt9(c.voltage[t]);
      out += ',';
      out += label;
      out += ',';
      out += c.regime_tag;
      out += '\n';
    }
  }
  return out;
}

void write_cycles(const std::filesystem::path& path, const CycleBatch& batch) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot write " + path.string());
  }
  out << format_cycles_csv(batch);
}

ChannelStats fit_normalizer(const CycleBatch& batch) {
  if (batch.empty()) {
    throw DataError("cannot fit normalizer on an empty batch");
  }
  ChannelStats stats;
  for (int c = 0; c < kChannels; ++c) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const WeldCycle& cycle : batch.cycles) {
      for (double v : cycle.channel(c)) {
        sum += v;
        ++n;
      }
    }
    const double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (const WeldCycle& cycle : batch.cycles) {
      for (double v : cycle.channel(c)) {
        sq += (v - mean) * (v - mean);
      }
    }
    stats.mean[c] = mean;
    stats.stddev[c] = std::max(std::sqrt(sq / static_cast<double>(n)), kNormEpsilon);
  }
  return stats;
}

CycleBatch apply_normalizer(const CycleBatch& batch, const ChannelStats& stats) {
  for (int c = 0; c < kChannels; ++c) {
    if (!(stats.stddev[c] > 0.0)) {
      throw DataError("normalizer std must be positive");
    }
  }
  CycleBatch out = batch;
  out.channel_stats = stats;
  for (WeldCycle& cycle : out.cycles) {
    for (int c = 0; c < kChannels; ++c) {
      for (double& v : cycle.channel(c)) {
        // Constant channels sit within rounding of the mean; snap them to zero
        // so the tiny epsilon does not amplify summation error.
        const double centred = v - stats.mean[c];
        v = stats.stddev[c] <= kNormEpsilon && std::abs(centred) <= 1e-12 * std::max(1.0, std::abs(v))
                ? 0.0
                : centred / stats.stddev[c];
      }
    }
  }
  return out;
}

}  // namespace weldood
