#pragma once

#include <Eigen/Dense>

namespace hytrack {

// State order is [px, vx, py, vy].
using StateVec = Eigen::Vector4d;
using StateCov = Eigen::Matrix4d;

struct StateDensity {
  StateVec mean = StateVec::Zero();
  StateCov cov = StateCov::Zero();
};

struct PolarPoint {
  double range = 0.0;
  double azimuth = 0.0;
};

struct MotionModel {
  double T = 2.5;
  double q = 0.01;
  double p_s = 0.999;
};

struct MeasurementModel {
  double sigma_r = 37.5;
  double sigma_theta = 0.017453292519943295;  // 1 deg

  Eigen::Matrix2d R() const;
};

struct EkfResult {
  StateDensity posterior;
  double log_likelihood = 0.0;
  Eigen::Vector2d innovation = Eigen::Vector2d::Zero();
  Eigen::Matrix2d S = Eigen::Matrix2d::Zero();
};

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

// Wraps to [-pi, pi).
double wrap_angle(double a);

Eigen::Matrix4d cv_transition(double T);
Eigen::Matrix4d cv_process_noise(double T, double q);

StateDensity cv_predict(const StateDensity& d, const MotionModel& m);

PolarPoint cartesian_to_polar(const StateVec& x);
PolarPoint cartesian_to_polar(double px, double py);
Eigen::Vector2d polar_to_cartesian(const PolarPoint& p);

// d h / d x evaluated at x.
Eigen::Matrix<double, 2, 4> polar_jacobian(const StateVec& x);

// Predicted measurement covariance H P H^T + R at the density mean.
Eigen::Matrix2d innovation_covariance(const StateDensity& d,
                                      const MeasurementModel& mm);

Eigen::Vector2d polar_innovation(const PolarPoint& z, const StateVec& x);

// iterations > 1 relinearises about the running estimate (Gauss-Newton).
EkfResult ekf_polar_update(const StateDensity& prior, const PolarPoint& z,
                           const MeasurementModel& mm, int iterations = 1);

EkfResult ekf_polar_update(const StateDensity& prior, const PolarPoint& z,
                           const Eigen::Matrix2d& R, int iterations = 1);

// Textbook linear update given a precomputed innovation.
EkfResult kalman_update(const StateDensity& prior, const Eigen::VectorXd& innovation,
                        const Eigen::MatrixXd& H, const Eigen::MatrixXd& R);

double log_gaussian(const Eigen::VectorXd& nu, const Eigen::MatrixXd& S);

void validate_density(const StateDensity& d);
bool is_psd(const Eigen::MatrixXd& m, double rel_tol = 1e-9);

}  // namespace hytrack
