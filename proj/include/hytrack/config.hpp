#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hytrack/detect.hpp"
#include "hytrack/gospa.hpp"
#include "hytrack/pmbm.hpp"
#include "hytrack/simulator.hpp"
#include "hytrack/tbd.hpp"

namespace hytrack {

struct CropWindow {
  int range_begin = 0, range_end = -1;  // half-open; end < 0 = no crop
  int azimuth_begin = 0, azimuth_end = -1;
  bool active() const { return range_end >= 0 || azimuth_end >= 0; }
};

struct DetectConfig {
  double tau_low = 0.12;
  double tau_high = 0.9;
  SgbdConfig sgbd;
  bool sgbd_scale_set = false;
  DbscanConfig dbscan;
};

struct PipelineConfig {
  std::string frames_dir;     // one of frames_dir / scenario_file
  std::string scenario_file;
  std::string mask_stem;
  std::string calibration_file;
  std::string truth_file;
  std::string out_dir = "out";
  bool timing = false;
  int threads = 1;
  std::optional<std::uint64_t> seed;  // overrides the scenario seed
  bool enable_pmbm = true;
  bool enable_tbd = true;
  bool emit_scoremaps = false;
  CropWindow crop;

  DetectConfig detect;
  MotionModel motion;  // p_s here is unused; each tracker has its own
  MeasurementModel measurement;
  PmbmConfig pmbm;
  bool birth_region_set = false;  // otherwise taken from the frame geometry
  TbdConfig tbd;
  double clutter_r0 = 0.0;  // <= 0: one third of max range
  // Also treat the current high-threshold detections as taken when gating TBD births.
  bool birth_suppress_high = true;
  GospaParams gospa;
  int calibration_frames = 8;

  // Throws ConfigError listing every problem found.
  void validate() const;
};

// Unknown keys are rejected.
PipelineConfig load_pipeline_config(const std::string& path);
PipelineConfig pipeline_config_from_json(const std::string& text);
std::string pipeline_config_to_json(const PipelineConfig& cfg);

ScenarioConfig load_scenario(const std::string& path);
ScenarioConfig scenario_from_json(const std::string& text);
std::string scenario_to_json(const ScenarioConfig& cfg);

}  // namespace hytrack
