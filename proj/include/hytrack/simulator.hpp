#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hytrack/frame.hpp"
#include "hytrack/geometry.hpp"
#include "hytrack/gospa.hpp"

namespace hytrack {

struct TargetSpec {
  long id = 0;
  long birth_k = 0;
  long death_k = -1;  // last frame alive; -1 = end of scenario
  // Either constant velocity from `position`, or the `waypoints` polyline
  // travelled at `speed` (holding at the last point).
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  Eigen::Vector2d velocity = Eigen::Vector2d::Zero();
  std::vector<Eigen::Vector2d> waypoints;
  double speed = 0.0;
  // Peak-cell SNR in dB over the local clutter mean, ramped linearly to
  // snr_db_end over the lifetime when set.
  double snr_db = 10.0;
  std::optional<double> snr_db_end;
  std::optional<double> rate;  // overrides snr_db when set
  bool fluctuating = true;
};

struct ScenarioConfig {
  FrameGeometry geom;
  long K = 100;
  std::uint64_t seed = 1;
  double T = 2.5;
  MeasurementModel psf;
  double clutter_lambda0 = 6553.6;  // expected clutter count over the FoV
  double clutter_r0 = 0.0;          // <= 0: one third of max range
  double clutter_shape = 0.0;       // K-distribution shape; 0 = exponential
  std::vector<TargetSpec> targets;
  std::vector<std::vector<Eigen::Vector2d>> land;
  double land_level = 50.0;
  double land_noise = 5.0;

  double r0() const { return clutter_r0 > 0 ? clutter_r0 : geom.max_range() / 3.0; }
  void validate() const;
};

// Geometry used by the bundled scenarios.
FrameGeometry default_geometry(int n_range = 256, int n_azimuth = 256);

// Built-in scenarios: "demo", "weak_ramp", "five_targets", "throughput".
ScenarioConfig bundled_scenario(const std::string& name, std::uint64_t seed = 1);
std::vector<std::string> bundled_scenario_names();

struct ScenarioTruth {
  std::vector<GroundTruthTrack> tracks;       // one per target
  std::vector<std::vector<char>> alive;       // [k][target]
  std::vector<std::vector<StateVec>> states;  // [k][target], valid when alive
  std::vector<long> ids;
  double T = 2.5;

  // Positions of targets alive at k.
  std::vector<Eigen::Vector2d> positions(long k) const;
};

ScenarioTruth generate_scenario(const ScenarioConfig& cfg);

// Expected clutter count per cell.
std::vector<double> clutter_mean_field(const ScenarioConfig& cfg);

// Rate giving the configured peak SNR for a target at position p.
double target_rate(const ScenarioConfig& cfg, const TargetSpec& t, long k, const Eigen::Vector2d& p,
                   const std::vector<double>& clutter_mean);

struct RenderOptions {
  bool clutter = true;
  bool targets = true;
  bool land = true;
  bool fading = true;
  std::uint64_t stream = 0;  // separates independent frame sets for one seed
};

RadarFrame render_frame(const ScenarioConfig& cfg, const ScenarioTruth& truth, long k,
                        const RenderOptions& opt = {});

std::vector<std::uint8_t> land_cells(const ScenarioConfig& cfg);

void write_truth_csv(const ScenarioTruth& truth, const std::string& path);
std::vector<GroundTruthTrack> read_truth_csv(const std::string& path);

// Deterministic per-(seed, stream, frame, entity) uniform source.
class StreamRng {
 public:
  StreamRng(std::uint64_t seed, std::uint64_t stream, long k, std::uint64_t entity);
  double uniform();      // [0, 1)
  double exponential();  // mean 1
  double normal();
  double gamma(double shape);  // unit scale

 private:
  std::mt19937_64 eng_;
  std::optional<double> spare_;
};

}  // namespace hytrack
