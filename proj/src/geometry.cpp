#include "hytrack/geometry.hpp"

#include <cmath>
#include <sstream>

#include "hytrack/errors.hpp"

namespace hytrack {

Eigen::Matrix2d MeasurementModel::R() const {
  Eigen::Matrix2d r = Eigen::Matrix2d::Zero();
  r(0, 0) = sigma_r * sigma_r;
  r(1, 1) = sigma_theta * sigma_theta;
  return r;
}

double wrap_angle(double a) {
  if (!std::isfinite(a)) throw InvalidInput("wrap_angle: non-finite angle");
  double w = std::fmod(a + kPi, kTwoPi);
  if (w < 0) w += kTwoPi;
  w -= kPi;
  if (w >= kPi) w -= kTwoPi;
  return w;
}

Eigen::Matrix4d cv_transition(double T) {
  Eigen::Matrix4d F = Eigen::Matrix4d::Identity();
  F(0, 1) = T;
  F(2, 3) = T;
  return F;
}

Eigen::Matrix4d cv_process_noise(double T, double q) {
  Eigen::Matrix2d blk;
  blk << T * T * T / 3.0, T * T / 2.0, T * T / 2.0, T;
  Eigen::Matrix4d Q = Eigen::Matrix4d::Zero();
  Q.block<2, 2>(0, 0) = q * blk;
  Q.block<2, 2>(2, 2) = q * blk;
  return Q;
}

void validate_density(const StateDensity& d) {
  if (!d.mean.allFinite() || !d.cov.allFinite())
    throw InvalidInput("state density has non-finite entries");
}

bool is_psd(const Eigen::MatrixXd& m, double rel_tol) {
  if (m.rows() != m.cols()) return false;
  Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  if ((m - sym).norm() > 1e-9 * std::max(1.0, m.norm())) return false;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  double tr = std::abs(sym.trace());
  return es.eigenvalues().minCoeff() >= -rel_tol * std::max(tr, 1e-300);
}

StateDensity cv_predict(const StateDensity& d, const MotionModel& m) {
  if (!(m.T > 0)) throw InvalidInput("cv_predict: T must be positive");
  validate_density(d);
  const Eigen::Matrix4d F = cv_transition(m.T);
  StateDensity out;
  out.mean = F * d.mean;
  out.cov = F * d.cov * F.transpose() + cv_process_noise(m.T, m.q);
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

PolarPoint cartesian_to_polar(double px, double py) {
  if (!std::isfinite(px) || !std::isfinite(py))
    throw InvalidInput("cartesian_to_polar: non-finite position");
  if (px == 0.0 && py == 0.0)
    throw DegenerateGeometry("cartesian_to_polar: position at radar origin");
  return {std::hypot(px, py), wrap_angle(std::atan2(py, px))};
}

PolarPoint cartesian_to_polar(const StateVec& x) {
  return cartesian_to_polar(x(0), x(2));
}

Eigen::Vector2d polar_to_cartesian(const PolarPoint& p) {
  return {p.range * std::cos(p.azimuth), p.range * std::sin(p.azimuth)};
}

Eigen::Matrix<double, 2, 4> polar_jacobian(const StateVec& x) {
  const double px = x(0), py = x(2);
  const double r2 = px * px + py * py;
  if (r2 == 0.0) throw DegenerateGeometry("polar_jacobian: position at radar origin");
  const double r = std::sqrt(r2);
  Eigen::Matrix<double, 2, 4> H = Eigen::Matrix<double, 2, 4>::Zero();
  H(0, 0) = px / r;
  H(0, 2) = py / r;
  H(1, 0) = -py / r2;
  H(1, 2) = px / r2;
  return H;
}

Eigen::Matrix2d innovation_covariance(const StateDensity& d, const MeasurementModel& mm) {
  const auto H = polar_jacobian(d.mean);
  Eigen::Matrix2d S = H * d.cov * H.transpose() + mm.R();
  return 0.5 * (S + S.transpose());
}

Eigen::Vector2d polar_innovation(const PolarPoint& z, const StateVec& x) {
  const PolarPoint p = cartesian_to_polar(x);
  return {z.range - p.range, wrap_angle(z.azimuth - p.azimuth)};
}

namespace {

Eigen::MatrixXd checked_inverse(const Eigen::MatrixXd& S) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(S);
  const auto& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  if (!(smin > 0) || smin / smax < 1e-15 || !std::isfinite(smax)) {
    std::ostringstream os;
    os << "singular innovation covariance (condition "
       << (smin > 0 ? smax / smin : INFINITY) << ")";
    throw NumericalError(os.str());
  }
  return S.ldlt().solve(Eigen::MatrixXd::Identity(S.rows(), S.cols()));
}

}  // namespace

double log_gaussian(const Eigen::VectorXd& nu, const Eigen::MatrixXd& S) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw NumericalError("log_gaussian: covariance not positive definite");
  const Eigen::VectorXd d = ldlt.vectorD();
  double logdet = 0.0;
  for (int i = 0; i < d.size(); ++i) {
    if (!(d(i) > 0)) throw NumericalError("log_gaussian: covariance not positive definite");
    logdet += std::log(d(i));
  }
  const double maha = nu.dot(ldlt.solve(nu));
  return -0.5 * (maha + logdet + nu.size() * std::log(kTwoPi));
}

EkfResult kalman_update(const StateDensity& prior, const Eigen::VectorXd& innovation,
                        const Eigen::MatrixXd& H, const Eigen::MatrixXd& R) {
  validate_density(prior);
  const Eigen::MatrixXd P = prior.cov;
  Eigen::MatrixXd S = H * P * H.transpose() + R;
  S = 0.5 * (S + S.transpose()).eval();
  const Eigen::MatrixXd Sinv = checked_inverse(S);
  const Eigen::MatrixXd K = P * H.transpose() * Sinv;
  const Eigen::MatrixXd IKH = Eigen::MatrixXd::Identity(4, 4) - K * H;

  EkfResult res;
  res.posterior.mean = prior.mean + K * innovation;
  Eigen::Matrix4d Pn = IKH * P * IKH.transpose() + K * R * K.transpose();
  res.posterior.cov = 0.5 * (Pn + Pn.transpose());
  res.log_likelihood = log_gaussian(innovation, S);
  if (innovation.size() == 2) {
    res.innovation = innovation;
    res.S = S;
  }
  return res;
}

EkfResult ekf_polar_update(const StateDensity& prior, const PolarPoint& z,
                           const Eigen::Matrix2d& R, int iterations) {
  validate_density(prior);
  if (!std::isfinite(z.range) || !std::isfinite(z.azimuth))
    throw InvalidInput("ekf_polar_update: non-finite measurement");
  const Eigen::Vector2d nu0 = polar_innovation(z, prior.mean);
  const Eigen::Matrix<double, 2, 4> H0 = polar_jacobian(prior.mean);
  EkfResult res = kalman_update(prior, nu0, H0, R);
  if (iterations <= 1) return res;

  // Gauss-Newton refinement of the MAP point; likelihood stays at the prior linearisation.
  StateVec xi = res.posterior.mean;
  Eigen::Matrix<double, 2, 4> H = H0;
  for (int it = 1; it < iterations; ++it) {
    H = polar_jacobian(xi);
    Eigen::Matrix2d S = H * prior.cov * H.transpose() + R;
    S = 0.5 * (S + S.transpose()).eval();
    const Eigen::Matrix2d Sinv = checked_inverse(S);
    const Eigen::Matrix<double, 4, 2> K = prior.cov * H.transpose() * Sinv;
    const Eigen::Vector2d r = polar_innovation(z, xi) - H * (prior.mean - xi);
    const StateVec next = prior.mean + K * r;
    const double step = (next - xi).norm();
    xi = next;
    if (step < 1e-9 * (1.0 + xi.norm())) break;
  }
  H = polar_jacobian(xi);
  Eigen::Matrix2d S = H * prior.cov * H.transpose() + R;
  S = 0.5 * (S + S.transpose()).eval();
  const Eigen::Matrix<double, 4, 2> K = prior.cov * H.transpose() * checked_inverse(S);
  const Eigen::Matrix4d IKH = Eigen::Matrix4d::Identity() - K * H;
  Eigen::Matrix4d Pn = IKH * prior.cov * IKH.transpose() + K * R * K.transpose();
  res.posterior.mean = xi;
  res.posterior.cov = 0.5 * (Pn + Pn.transpose());
  return res;
}

EkfResult ekf_polar_update(const StateDensity& prior, const PolarPoint& z,
                           const MeasurementModel& mm, int iterations) {
  return ekf_polar_update(prior, z, mm.R(), iterations);
}

}  // namespace hytrack
