#include <cmath>

#include "doctest.h"
#include "gen.hpp"
#include "hytrack/errors.hpp"
#include "hytrack/geometry.hpp"

using namespace hytrack;

TEST_CASE("cv_predict propagates the mean linearly") {
  StateDensity d;
  d.mean << 100, 2, 50, 0;
  MotionModel m{2.5, 0.01, 1.0};
  const StateDensity p = cv_predict(d, m);
  CHECK(p.mean(0) == doctest::Approx(105));
  CHECK(p.mean(1) == doctest::Approx(2));
  CHECK(p.mean(2) == doctest::Approx(50));
  CHECK(p.mean(3) == doctest::Approx(0));
}

TEST_CASE("process noise block for q=0.01, T=2.5") {
  const Eigen::Matrix4d Q = cv_process_noise(2.5, 0.01);
  CHECK(Q(0, 0) == doctest::Approx(0.0520833333333).epsilon(1e-10));
  CHECK(Q(0, 1) == doctest::Approx(0.03125).epsilon(1e-12));
  CHECK(Q(1, 0) == doctest::Approx(0.03125).epsilon(1e-12));
  CHECK(Q(1, 1) == doctest::Approx(0.025).epsilon(1e-12));
  CHECK(Q(2, 2) == Q(0, 0));
  CHECK(Q(0, 2) == 0.0);
}

TEST_CASE("zero covariance and zero velocity: cov becomes Q") {
  StateDensity d;
  d.mean << 10, 0, -4, 0;
  for (double T : {0.1, 1.0, 2.5, 7.0}) {
    const StateDensity p = cv_predict(d, MotionModel{T, 0.3, 1.0});
    CHECK((p.mean - d.mean).norm() == 0.0);
    CHECK((p.cov - cv_process_noise(T, 0.3)).norm() < 1e-15);
  }
}

TEST_CASE("cv_predict rejects bad input") {
  StateDensity d;
  d.mean(0) = NAN;
  CHECK_THROWS_AS(cv_predict(d, MotionModel{}), InvalidInput);
  CHECK_THROWS_AS(cv_predict(StateDensity{}, MotionModel{0.0, 0.01, 1.0}), InvalidInput);
}

TEST_CASE("property: cv_predict keeps covariance symmetric PSD") {
  testgen::Gen g(11);
  for (int t = 0; t < 500; ++t) {
    StateDensity d;
    for (int i = 0; i < 4; ++i) d.mean(i) = g.uniform(-1e4, 1e4);
    d.cov = g.psd4(Eigen::Vector4d(g.log_uniform(1e-3, 1e3), g.log_uniform(1e-3, 10),
                                   g.log_uniform(1e-3, 1e3), g.log_uniform(1e-3, 10)));
    const MotionModel m{g.uniform(0.01, 10), g.uniform(0, 2), 1.0};
    const StateDensity p = cv_predict(d, m);
    CHECK((p.cov - p.cov.transpose()).norm() <= 1e-9 * p.cov.norm());
    CHECK(is_psd(p.cov));
  }
}

TEST_CASE("cartesian_to_polar examples") {
  PolarPoint a = cartesian_to_polar(100, 0);
  CHECK(a.range == doctest::Approx(100));
  CHECK(a.azimuth == doctest::Approx(0));
  PolarPoint b = cartesian_to_polar(0, 100);
  CHECK(b.range == doctest::Approx(100));
  CHECK(b.azimuth == doctest::Approx(kPi / 2));
  PolarPoint c = cartesian_to_polar(3, 4);
  CHECK(c.range == doctest::Approx(5));
  CHECK(c.azimuth == doctest::Approx(0.927295).epsilon(1e-6));
  CHECK_THROWS_AS(cartesian_to_polar(0.0, 0.0), DegenerateGeometry);
  // Negative x axis lands on -pi (principal interval is half-open).
  CHECK(cartesian_to_polar(-1.0, -0.0).azimuth == doctest::Approx(-kPi));
}

TEST_CASE("property: azimuth wrap is 2pi periodic and in [-pi, pi)") {
  testgen::Gen g(12);
  for (int t = 0; t < 2000; ++t) {
    const double a = g.uniform(-50, 50);
    const double w = wrap_angle(a);
    CHECK(w >= -kPi);
    CHECK(w < kPi);
    CHECK(std::abs(wrap_angle(a + kTwoPi) - w) < 1e-12);
    const double px = g.uniform(-1e4, 1e4), py = g.uniform(-1e4, 1e4);
    const PolarPoint p = cartesian_to_polar(px, py);
    const double rx = px * std::cos(kTwoPi) - py * std::sin(kTwoPi);
    const double ry = px * std::sin(kTwoPi) + py * std::cos(kTwoPi);
    const PolarPoint q = cartesian_to_polar(rx, ry);
    CHECK(std::abs(p.range - q.range) < 1e-9);
    CHECK(std::abs(wrap_angle(p.azimuth - q.azimuth)) < 1e-12);
  }
}

TEST_CASE("EKF with zero innovation leaves the mean alone") {
  StateDensity d;
  d.mean << 3000, 1, -2000, 2;
  d.cov = Eigen::Vector4d(400, 4, 900, 4).asDiagonal();
  const EkfResult r = ekf_polar_update(d, cartesian_to_polar(d.mean), MeasurementModel{});
  CHECK((r.posterior.mean - d.mean).norm() < 1e-9);
  CHECK(is_psd(r.posterior.cov));
  CHECK(r.posterior.cov.trace() < d.cov.trace());
}

TEST_CASE("EKF with a confident prior ignores the measurement") {
  StateDensity d;
  d.mean << 3000, 1, 500, 2;
  d.cov = 1e-12 * Eigen::Matrix4d::Identity();
  const EkfResult r = ekf_polar_update(d, PolarPoint{3400, 0.3}, MeasurementModel{});
  CHECK((r.posterior.mean - d.mean).norm() < 1e-6);
}

TEST_CASE("EKF on the x axis reduces to the scalar Kalman filter") {
  const double P = 250.0, m = 4000.0, zr = 4031.0;
  MeasurementModel mm;
  StateDensity d;
  d.mean << m, 0, 0, 0;
  d.cov.setZero();
  d.cov(0, 0) = P;
  const EkfResult r = ekf_polar_update(d, PolarPoint{zr, 0.0}, mm);
  const double s2 = mm.sigma_r * mm.sigma_r;
  const double K = P / (P + s2);
  CHECK(std::abs(r.posterior.mean(0) - (m + K * (zr - m))) < 1e-10 * m);
  CHECK(std::abs(r.posterior.cov(0, 0) - P * s2 / (P + s2)) < 1e-10 * P);
  const double ll = -0.5 * (zr - m) * (zr - m) / (P + s2) - 0.5 * std::log(2 * kPi * (P + s2)) -
                    0.5 * std::log(2 * kPi * mm.sigma_theta * mm.sigma_theta);
  CHECK(r.log_likelihood == doctest::Approx(ll).epsilon(1e-12));
}

TEST_CASE("property: huge R leaves the prior unchanged") {
  testgen::Gen g(13);
  for (int t = 0; t < 200; ++t) {
    StateDensity d;
    d.mean << g.uniform(500, 8000), g.uniform(-10, 10), g.uniform(-8000, 8000), g.uniform(-10, 10);
    d.cov = g.psd4(Eigen::Vector4d(30, 2, 30, 2), 1.0);
    const PolarPoint z{g.uniform(500, 9000), g.uniform(-3, 3)};
    const EkfResult r = ekf_polar_update(d, z, Eigen::Matrix2d::Identity() * 1e16);
    CHECK((r.posterior.mean - d.mean).norm() <= 1e-8 * d.mean.norm());
    CHECK((r.posterior.cov - d.cov).norm() <= 1e-8 * d.cov.norm());
  }
}

TEST_CASE("property: linear update matches the textbook Kalman equations") {
  testgen::Gen g(14);
  for (int t = 0; t < 200; ++t) {
    StateDensity d;
    for (int i = 0; i < 4; ++i) d.mean(i) = g.uniform(-100, 100);
    d.cov = g.psd4(Eigen::Vector4d(5, 1, 5, 1), 0.1);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(2, 4);
    H(0, 0) = 1;
    H(1, 2) = 1;
    Eigen::MatrixXd R = g.psd4(Eigen::Vector4d::Ones(), 0.5).topLeftCorner(2, 2);
    Eigen::VectorXd z(2);
    z << g.uniform(-100, 100), g.uniform(-100, 100);
    const Eigen::VectorXd nu = z - H * d.mean;
    const EkfResult r = kalman_update(d, nu, H, R);
    const Eigen::MatrixXd S = H * d.cov * H.transpose() + R;
    const Eigen::MatrixXd K = d.cov * H.transpose() * S.inverse();
    const Eigen::VectorXd xm = d.mean + K * nu;
    const Eigen::MatrixXd Pm = (Eigen::Matrix4d::Identity() - K * H) * d.cov;
    CHECK((r.posterior.mean - xm).norm() <= 1e-12 * std::max(1.0, xm.norm()));
    CHECK((r.posterior.cov - Pm).norm() <= 1e-12 * std::max(1.0, Pm.norm()) * 10);
  }
}

TEST_CASE("singular innovation covariance is a numerical error") {
  StateDensity d;
  d.mean << 1000, 0, 0, 0;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(2, 4);
  H(0, 0) = 1;
  CHECK_THROWS_AS(kalman_update(d, Eigen::Vector2d(1, 0), H, Eigen::Matrix2d::Zero()), NumericalError);
}

TEST_CASE("iterated EKF converges to the measurement for a vague prior") {
  StateDensity d;
  d.mean << 2000, 0, 2000, 0;
  d.cov = Eigen::Vector4d(1e6, 1, 1e6, 1).asDiagonal();
  const PolarPoint z{3000, 0.2};
  const EkfResult one = ekf_polar_update(d, z, MeasurementModel{}, 1);
  const EkfResult many = ekf_polar_update(d, z, MeasurementModel{}, 10);
  const PolarPoint p1 = cartesian_to_polar(one.posterior.mean);
  const PolarPoint pm = cartesian_to_polar(many.posterior.mean);
  CHECK(std::abs(pm.range - z.range) < std::abs(p1.range - z.range) + 1e-9);
  CHECK(std::abs(pm.range - z.range) < 5.0);
  CHECK(std::abs(pm.azimuth - z.azimuth) < 2e-3);
}
