#pragma once

#include <optional>
#include <vector>

#include "hytrack/detect.hpp"
#include "hytrack/frame.hpp"
#include "hytrack/geometry.hpp"
#include "hytrack/pmbm.hpp"
#include "hytrack/preprocess.hpp"

namespace hytrack {

struct TbdComponent {
  StateDensity density;
  double r = 0.0;
  double alpha = 20.0;
  double beta = 1.0;
  double gamma_ne = 500.0;
  double lambda_hat = 0.0;
  long label = 0;
  bool confirmed = false;

  // Working values set by predict / EM.
  double r_pred = 0.0;
  double prior_a = 1.0;  // merged Gamma used by the EM
  double prior_b = 1.0;
  double post_a = 1.0;  // Gamma posterior after the EM
  double post_b = 1.0;
  double n_bar = 0.0;
  double log_evidence = 0.0;  // log Bayes factor of the gated data, present vs absent
  int age = 0;
  long birth_time = 0;
  int pmbm_overlap = 0;  // consecutive frames within epsilon of a PMBM estimate
};

struct ClutterModel {
  double lambda0 = 0.0;
  double r0 = 1.0;
  std::vector<double> range_profile;  // per range cell, sums to 1

  double cell_prob(int ir, int n_azimuth) const { return range_profile[ir] / n_azimuth; }
};

// RateDensity: the Gamma/Exponential densities compared at the MAP rate.
// Evidence: both rate priors integrated against the gated data likelihood.
enum class ExistenceMode { Evidence, RateDensity };

struct TbdConfig {
  double p_s = 0.95;
  double p_b = 1e-4;
  double t_c = 0.5;
  double t_d = 1e-3;
  int em_max_iters = 20;
  double em_rel_tol = 1e-7;
  double gate_sigma = 6.0;
  double epsilon_pmbm = 100.0;
  double alpha0 = 20.0;
  double beta0 = 1.0;
  double gamma0 = 500.0;
  double eta = 1.05;
  double birth_pos_std_cells = 2.0;
  double birth_vel_std = 5.0;
  // Existence weight used when collapsing a newborn's rate prior.
  double birth_merge_r = 0.5;
  // Frame intensity units per expected count.
  double intensity_scale = 1.0;
  int iekf_iters = 8;
  ExistenceMode existence_mode = ExistenceMode::Evidence;
  // Gamma shape cap of the single-frame rate prior in the evidence; 1 matches
  // exponential amplitude fading. <= 0 uses the tracked shape as is.
  double fluctuation_shape = 1.0;
  // A component this many frames in a row within epsilon_pmbm of a PMBM
  // estimate is dropped; 0 keeps both.
  int yield_frames = 3;

  void validate() const;
};

struct GammaParams {
  double a = 1.0;
  double b = 1.0;
};

struct RateUpdate {
  double a = 1.0;
  double b = 1.0;
  double lambda_hat = 0.0;
};

double log_gamma_pdf(double x, double a, double b);
double log_exponential_pdf(double x, double rate);

GammaParams merge_existence_prior(double r_pred, double alpha, double beta, double gamma_ne);
RateUpdate rate_map_update(double alpha, double beta, double n_bar);
double existence_update(double lambda_hat, double alpha, double beta, double gamma_ne,
                        double r_pred);

// log of  int exp(dl(lambda)) Gamma(lambda; a, b) dlambda  with
// dl(lambda) = sum_i z_i log(1 + lambda G_i / nu_i) - lambda sum_i G_i,
// nu_i being the intensity from everything except the component.
double log_rate_evidence(const std::vector<double>& z, const std::vector<double>& nu_other,
                         const std::vector<double>& G, double a, double b);

// Posterior existence from a log Bayes factor.
double existence_from_evidence(double log_bf, double r_pred);

ClutterModel make_clutter_model(const FrameGeometry& g, double r0, double lambda0 = 0.0);

// Rectangle of cells around a predicted measurement; azimuth indices are
// unwrapped (may run past the grid on full-circle frames).
struct GateWindow {
  int ir0 = 0, ir1 = -1;
  int ia0 = 0, ia1 = -1;
  bool empty() const { return ir1 < ir0 || ia1 < ia0; }
};

GateWindow gate_window(const PolarPoint& centre, const Eigen::Matrix2d& S, double gate_sigma,
                       const FrameGeometry& g);

// Separable cell integrals of the point spread about `centre` over a window.
// Centroid offsets are the truncated-Gaussian conditional means relative to
// the centre (metres, radians).
struct CellMass {
  GateWindow win;
  std::vector<double> pr, cr;  // per range cell in window
  std::vector<double> pa, ca;  // per azimuth cell in window
  double total() const;
  double at(int ir, int ia_unwrapped) const { return pr[ir - win.ir0] * pa[ia_unwrapped - win.ia0]; }
};

CellMass cell_mass(const PolarPoint& centre, const MeasurementModel& mm, const FrameGeometry& g,
                   const GateWindow& win);

int wrap_azimuth_index(int ia, const FrameGeometry& g);

// Plain-array forms of the E-step quantities.
// G[m][i]: mass of component m in cell i; result index 0 is clutter.
std::vector<double> expected_counts(const std::vector<double>& z, const std::vector<double>& clutter,
                                    const std::vector<std::vector<double>>& G,
                                    const std::vector<double>& lambda);

struct SyntheticMeasurement {
  PolarPoint z;
  Eigen::Matrix2d R = Eigen::Matrix2d::Zero();
  double weight = 0.0;  // attributed count
};

// offsets[i]: conditional centroid of cell i relative to `centre`.
// outside_mass > 0 adds the expected count of the point spread that falls
// outside the cells, located at the complement's centroid.
std::optional<SyntheticMeasurement> synthetic_measurement(
    const std::vector<double>& z, const std::vector<double>& nu, const std::vector<double>& G,
    const std::vector<Eigen::Vector2d>& offsets, const PolarPoint& centre, double lambda,
    const Eigen::Matrix2d& R, bool impute_outside = false);

struct EmTrace {
  std::vector<double> objective;      // observed-data log posterior per E-step
  std::vector<double> aux_gain;       // auxiliary gain of each M-step
  std::vector<double> mass_residual;  // relative |sum n - sum z| per E-step
  int iterations = 0;
};

// Runs the EM on predicted components in place. Also re-estimates
// clutter.lambda0 from cells outside every gate.
void em_update(std::vector<TbdComponent>& comps, const RadarFrame& frame, ClutterModel& clutter,
               const MeasurementModel& mm, const TbdConfig& cfg, EmTrace* trace = nullptr,
               const LandMask* mask = nullptr);

std::vector<TbdComponent> tbd_predict(const std::vector<TbdComponent>& comps,
                                      const MotionModel& model, const TbdConfig& cfg);

void tbd_existence_update(std::vector<TbdComponent>& comps, const TbdConfig& cfg);

std::vector<TbdComponent> adaptive_birth(const std::vector<Cluster>& low_clusters,
                                         const std::vector<TrackEstimate>& pmbm_estimates,
                                         const std::vector<TbdComponent>& existing,
                                         const MeasurementModel& mm, const TbdConfig& cfg,
                                         const FrameGeometry& g, long* next_label, long k);

void yield_to_pmbm(std::vector<TbdComponent>& comps, const std::vector<TrackEstimate>& pmbm,
                   const TbdConfig& cfg);

// Confirms and deletes in place; returns confirmed estimates.
std::vector<TrackEstimate> tbd_manage(std::vector<TbdComponent>& comps, const TbdConfig& cfg);

}  // namespace hytrack
