#pragma once

#include <utility>
#include <vector>

#include "hytrack/geometry.hpp"

namespace hytrack {

struct BernoulliComponent {
  double r = 0.0;
  StateDensity density;
  long label = 0;
  long birth_time = 0;
};

struct GlobalHypothesis {
  double weight = 1.0;
  // (pool index, measurement index or -1 for missed / not updated), sorted by pool index.
  std::vector<std::pair<int, int>> assignments;
};

struct PoissonComponent {
  double w = 0.0;
  StateDensity density;
};

using PoissonIntensity = std::vector<PoissonComponent>;

struct PmbmPosterior {
  PoissonIntensity poisson;
  std::vector<GlobalHypothesis> hypotheses{GlobalHypothesis{}};
  std::vector<BernoulliComponent> bernoullis;
  long next_label = 1;
  long k = 0;
};

// Polar sector in which the static birth intensity is laid out.
struct BirthRegion {
  double r_min = 500.0;
  double r_max = 7000.0;
  double az_min = -1.0;
  double az_max = 1.0;
};

struct PmbmConfig {
  double p_d = 0.9;
  double clutter_intensity = 1e-6;  // per square metre
  double birth_weight = 0.1;
  double gate = 30.0;  // squared Mahalanobis in measurement space
  int n_max = 200;
  double t_bp = 1e-4;
  double t_pp = 1e-5;
  double t_e = 0.5;
  double p_s = 0.999;
  int birth_grid_range = 8;
  int birth_grid_azimuth = 8;
  double birth_velocity_std = 10.0;
  BirthRegion birth_region;

  void validate() const;
};

struct TrackEstimate {
  long label = 0;
  StateVec mean = StateVec::Zero();
  double r = 0.0;
};

PoissonIntensity birth_intensity(const PmbmConfig& cfg);

PmbmPosterior pmbm_predict(const PmbmPosterior& post, const MotionModel& model,
                           const PmbmConfig& cfg);

PmbmPosterior pmbm_update(const PmbmPosterior& post, const std::vector<PolarPoint>& z,
                          const MeasurementModel& mm, const PmbmConfig& cfg);

PmbmPosterior pmbm_prune(const PmbmPosterior& post, const PmbmConfig& cfg);

std::vector<TrackEstimate> pmbm_estimate(const PmbmPosterior& post, const PmbmConfig& cfg);

// Clutter intensity at a polar measurement (range Jacobian applied).
double polar_clutter_intensity(const PolarPoint& z, const PmbmConfig& cfg);

void validate_posterior(const PmbmPosterior& post, double tol = 1e-9);

}  // namespace hytrack
