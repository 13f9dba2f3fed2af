#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace hytrack {

struct GospaResult {
  double total = 0.0;
  double loc_sq = 0.0;  // contributions to total^p
  double missed_sq = 0.0;
  double false_sq = 0.0;
  int missed_count = 0;
  int false_count = 0;
};

struct GospaParams {
  double c = 350.0;
  double p = 2.0;
  double alpha = 2.0;
};

GospaResult gospa(const std::vector<Eigen::Vector2d>& truth, const std::vector<Eigen::Vector2d>& est,
                  const GospaParams& prm = {});

struct TruthSample {
  double t = 0.0;
  double px = 0.0;
  double py = 0.0;
};

struct GroundTruthTrack {
  long id = 0;
  std::vector<TruthSample> samples;  // strictly increasing t

  void validate() const;
};

std::optional<Eigen::Vector2d> interpolate_truth(const GroundTruthTrack& tr, double t);

}  // namespace hytrack
