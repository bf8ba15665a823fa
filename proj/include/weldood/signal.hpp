#pragma once

// Welding-cycle data: the cycle record, a parametric generator for synthetic
// pulse-train cycles, long-format CSV ingestion, and per-channel z-scoring.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace weldood {

inline constexpr int kChannels = 2;
inline constexpr std::size_t kMinCycleLength = 8;

/// One segmented cycle of synchronised current/voltage samples.
struct WeldCycle {
  std::vector<double> current;
  std::vector<double> voltage;
  std::optional<int> label;  ///< 0 = substandard, 1 = satisfactory
  std::string cycle_id;
  std::string regime_tag;

  std::size_t length() const { return current.size(); }
  const std::vector<double>& channel(int c) const { return c == 0 ? current : voltage; }
  std::vector<double>& channel(int c) { return c == 0 ? current : voltage; }
};

/// Throws DataError unless lengths match, N >= 8, samples are finite and the
/// label (if any) is binary.
void validate(const WeldCycle& cycle);

struct ChannelStats {
  std::array<double, kChannels> mean{0.0, 0.0};
  std::array<double, kChannels> stddev{1.0, 1.0};
};

struct CycleBatch {
  std::vector<WeldCycle> cycles;
  std::optional<ChannelStats> channel_stats;

  std::size_t size() const { return cycles.size(); }
  bool empty() const { return cycles.empty(); }
  /// Labels of all cycles; throws DataError if any cycle is unlabelled.
  std::vector<int> labels() const;
};

enum class WaveformShape { kSquare, kSawtooth, kSmoothed };

std::string to_string(WaveformShape shape);
WaveformShape parse_waveform_shape(const std::string& name);

/// Generator parameters for one process regime.
///
/// Each cycle draws an amplitude factor a = 1 + amplitude_jitter * g with
/// g ~ N(0, 1). The quality rule labels the cycle satisfactory iff
/// |a - 1| <= quality_tolerance, i.e. the realised amplitude stays within
/// the tolerance band around nominal.
struct ProcessParams {
  std::string name;  ///< optional regime name; used as regime tag when set
  std::array<double, kChannels> base_amplitude{1.0, 0.6};
  double pulse_period = 16.0;  ///< samples
  double pulse_duty = 0.4;
  WaveformShape shape = WaveformShape::kSquare;
  std::array<double, kChannels> noise_std{0.03, 0.03};
  double drift_slope = 0.0;  ///< added per sample to both channels
  int cycle_length = 64;
  double amplitude_jitter = 0.1;
  double quality_tolerance = 0.07;

  /// Throws ConfigError on pulse_period < 4, duty outside (0,1), negative
  /// noise or jitter, or cycle_length < 8.
  void validate() const;
  /// Stable 64-bit FNV-1a hash of the canonical text form.
  std::uint64_t hash() const;
  /// name if set, otherwise "p" followed by the hex hash.
  std::string regime_tag() const;
};

/// Deterministic for a fixed (params, count, seed).
CycleBatch generate_cycles(const ProcessParams& params, int count, std::uint64_t seed);

/// Unit pulse shape value in [0, 1] at sample index t.
double pulse_shape(const ProcessParams& params, double t);

struct CsvSchema {
  std::string cycle_id = "cycle_id";
  std::string t = "t";
  std::string current = "current";
  std::string voltage = "voltage";
  std::string label = "label";    ///< optional column
  std::string regime = "regime";  ///< optional column
};

/// Reads long-format CSV (one row per sample). Rows are grouped by cycle id in
/// order of first appearance; sample order is preserved. Row numbers in error
/// messages count data rows from 1 (the header is not counted).
CycleBatch load_cycles(const std::filesystem::path& path, const CsvSchema& schema = {});
CycleBatch parse_cycles_csv(const std::string& text, const CsvSchema& schema = {});

/// Writes the batch with columns cycle_id,t,current,voltage,label,regime using
/// 9 significant digits. Missing labels are written as empty fields.
void write_cycles(const std::filesystem::path& path, const CycleBatch& batch);
std::string format_cycles_csv(const CycleBatch& batch);

inline constexpr double kNormEpsilon = 1e-8;

/// Per-channel population mean/std over every sample in the batch, with
/// std clamped below at kNormEpsilon.
ChannelStats fit_normalizer(const CycleBatch& batch);
CycleBatch apply_normalizer(const CycleBatch& batch, const ChannelStats& stats);

}  // namespace weldood
