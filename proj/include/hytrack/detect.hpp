#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "hytrack/frame.hpp"
#include "hytrack/preprocess.hpp"

namespace hytrack {

struct ScoreMap {
  FrameGeometry geom;
  std::vector<double> s;

  double at(int ir, int ia) const { return s[geom.index(ir, ia)]; }
};

struct SgbdConfig {
  double sigma_s = 1.5;  // smoothing std, cells
  // Raw scores are divided by this; see calibrate_sgbd.
  double scale = 1.0;
};

struct DbscanConfig {
  double eps_cells = 3.0;
  int min_points = 3;
};

struct Cluster {
  std::vector<std::pair<int, int>> member_cells;
  PolarPoint centroid;
  double centroid_range_idx = 0.0;  // fractional cell coordinates
  double centroid_azimuth_idx = 0.0;
  double peak_score = 0.0;
  int cell_count = 0;
};

using DetectionGrid = std::vector<std::uint8_t>;

// Unnormalised clamped negative divergence of the smoothed gradient field.
// Masked cells are in-filled with the mean of unmasked cells and score 0.
std::vector<double> sgbd_raw(const RadarFrame& f, double sigma_s, const LandMask* mask = nullptr);

ScoreMap sgbd_score(const RadarFrame& f, const SgbdConfig& cfg, const LandMask* mask = nullptr);

// Scale such that the given quantile of clutter-only raw scores maps to `level`.
double calibrate_sgbd(const std::vector<RadarFrame>& clutter_frames, double sigma_s,
                      double quantile = 0.9999, double level = 0.15,
                      const LandMask* mask = nullptr);

DetectionGrid threshold_detect(const ScoreMap& scores, double tau);

// Output ordered by descending peak score, ties by centroid cell.
std::vector<Cluster> dbscan_cluster(const DetectionGrid& det, const ScoreMap& scores,
                                    const RadarFrame& frame, const DbscanConfig& cfg);

void sort_clusters(std::vector<Cluster>& clusters);

std::vector<PolarPoint> extract_point_detections(const std::vector<Cluster>& clusters);

}  // namespace hytrack
