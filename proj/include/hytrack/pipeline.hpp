#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hytrack/config.hpp"
#include "hytrack/fusion.hpp"

namespace hytrack {

struct StageTimes {
  double preprocess = 0, detect = 0, pmbm = 0, tbd = 0, fuse = 0, total = 0;
};

struct FrameResult {
  long k = 0;
  std::vector<TrackEstimate> pmbm;
  std::vector<TrackEstimate> tbd;
  std::vector<FusedEstimate> fused;
  std::vector<ProximityWarning> warnings;
  int clusters_high = 0;
  int clusters_low = 0;
  int tbd_components = 0;
  int em_iterations = 0;
  StageTimes times;
};

// One frame at a time; the PMBM estimates of frame k feed the TBD birth of
// frame k.
class HybridTracker {
 public:
  HybridTracker(const PipelineConfig& cfg, const FrameGeometry& geom,
                std::optional<LandMask> mask = std::nullopt);

  FrameResult step(const RadarFrame& frame, ScoreMap* scores_out = nullptr);

  const PmbmPosterior& pmbm_posterior() const { return pmbm_; }
  const std::vector<TbdComponent>& tbd_components() const { return comps_; }

 private:
  PipelineConfig cfg_;
  FrameGeometry geom_;
  std::optional<LandMask> mask_;
  PmbmPosterior pmbm_;
  std::vector<TbdComponent> comps_;
  ClutterModel clutter_;
  MotionModel pmbm_motion_, tbd_motion_;
  long next_tbd_label_ = 1;
  bool first_ = true;
};

// Birth region covering the frame's field of view.
BirthRegion birth_region_for(const FrameGeometry& g);

RadarFrame crop_frame(const RadarFrame& f, const CropWindow& c);
LandMask crop_mask(const LandMask& m, const CropWindow& c);

// SGBD scale from clutter-only renders of a scenario (independent stream).
double calibrate_scenario(const ScenarioConfig& sc, int n_frames, double sigma_s);
void write_calibration(const std::string& path, double scale, double sigma_s);
double read_calibration(const std::string& path);

void write_tracks_header(std::ostream& os);
void write_tracks_rows(std::ostream& os, const std::vector<FusedEstimate>& fused);

struct MetricsRow {
  long k = 0;
  GospaResult g;
  int n_truth = 0;
  int n_est = 0;
};

// Mean of every column over the rows.
MetricsRow average_metrics(const std::vector<MetricsRow>& rows);
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

// Positions of all truth tracks present at time t.
std::vector<Eigen::Vector2d> truth_positions(const std::vector<GroundTruthTrack>& truth, double t);

struct TrackRow {
  long k = 0;
  long label = 0;
  double px = 0, py = 0, vx = 0, vy = 0, r = 0, lambda_hat = 0;
  std::string source;
};
std::vector<TrackRow> read_tracks_csv(const std::string& path);

std::vector<MetricsRow> score_tracks(const std::vector<TrackRow>& tracks,
                                     const std::vector<GroundTruthTrack>& truth, long n_frames,
                                     double T, const GospaParams& prm);

// Runs the full chain with file outputs; returns the number of frames processed.
long run_pipeline(const PipelineConfig& cfg);

}  // namespace hytrack
