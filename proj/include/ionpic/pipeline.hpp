#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ionpic/beam.hpp"
#include "ionpic/designer.hpp"
#include "ionpic/detection.hpp"
#include "ionpic/overlap.hpp"

namespace ionpic {

struct PropagationSettings {
  NearFieldOptions grid;
  double focus_z_lo = 30e-6;  // m above the chip surface
  double focus_z_hi = 70e-6;
  double focus_dz = 4e-6;
  double map_half_width = 10e-6;  // raster half-width around the ion
  std::size_t map_stride = 1;
  double te_weight = 0.5;  // combined-profile weighting for the intensity form
};

struct RabiSettings {
  RabiModel model{2.0 * kPi * 50e3, 0.05, 19.0, 0};
  double t_max = 100e-6;
  std::size_t points = 201;
};

struct PipelineConfig {
  DesignConfig design;
  std::string library_te;  // parameter library files, resolved against base_dir
  std::string library_tm;
  PropagationSettings propagation;
  DetectionConfig detection;
  std::uint64_t fidelity_trials = 100000;
  std::uint64_t timing_trials = 100000;
  RabiSettings rabi;
  std::uint64_t seed = 1;
  unsigned jobs = 1;
  std::string out_dir = "ionpic-out";
  std::string base_dir = ".";  // directory of the config file

  void validate() const;
};

/// Layered defaults: every key is optional and overrides the built-in value.
/// Lengths are in micrometres (keys ending in _um). Keys starting with "_"
/// are comments. Throws Config on unknown keys or bad values.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const std::string& base_dir = ".");
PipelineConfig load_pipeline_config(const std::string& path);

/// The full default configuration with a provenance note on each physical
/// value; loading it back yields the defaults.
nlohmann::json default_pipeline_config_json();

struct StageRecord {
  std::string name;
  std::string key;  // hash of the stage inputs, including upstream keys
  nlohmann::json results;
  std::vector<std::pair<std::string, std::string>> artifacts;  // path relative to out_dir, checksum
};

struct Manifest {
  std::string inputs_hash;
  std::vector<StageRecord> stages;

  nlohmann::json to_json() const;
  static Manifest from_json(const nlohmann::json& j);
  const StageRecord* find(const std::string& name) const;
};

struct PipelineRun {
  Manifest manifest;
  std::vector<std::string> recomputed;  // stages that were not served from cache
};

inline const std::vector<std::string> kPipelineStages{"solid_angle", "design", "beam",
                                                      "ledger",      "detection", "rabi"};

/// Runs the stages in order, reusing a stage when <out>/<stage>/stage.json
/// has the same key and every artifact still matches its checksum. The
/// manifest is rewritten after each stage, so a failure keeps what was done.
/// A failing stage throws Stage naming it; a missing library throws
/// MissingInput before any simulation.
PipelineRun run_pipeline(const PipelineConfig& config);

/// One-page summary. Missing stages are listed; an empty manifest gives
/// "no stages".
std::string report(const Manifest& manifest);

/// Content checksum of a file (FNV-1a, hex).
std::string file_checksum(const std::string& path);

}  // namespace ionpic
