#include <cmath>

#include <boost/math/special_functions/digamma.hpp>

#include "doctest.h"
#include "gen.hpp"
#include "hytrack/errors.hpp"
#include "hytrack/tbd.hpp"
#include "oracles.hpp"

using namespace hytrack;

namespace {

FrameGeometry sector(int nr = 64, int na = 64) {
  FrameGeometry g;
  g.n_range = nr;
  g.n_azimuth = na;
  g.range_res = 15.0;
  g.range_offset = 2000.0;
  g.azimuth_res = 0.005;
  g.azimuth_offset = -0.16;
  return g;
}

TbdComponent comp_at(double range, double az, double r = 0.5) {
  TbdComponent c;
  c.density.mean << range * std::cos(az), 0, range * std::sin(az), 0;
  c.density.cov = Eigen::Vector4d(400, 4, 400, 4).asDiagonal();
  c.r = r;
  return c;
}

// Renders lambda * (cell mass of a polar Gaussian) on top of exponential clutter.
RadarFrame render(const FrameGeometry& g, const PolarPoint& t, double lambda, double clutter_mean,
                  std::uint64_t seed) {
  testgen::Gen gen(seed);
  RadarFrame f = make_frame(g);
  const MeasurementModel mm;
  for (int ir = 0; ir < g.n_range; ++ir)
    for (int ia = 0; ia < g.n_azimuth; ++ia) {
      double v = clutter_mean > 0 ? -clutter_mean * std::log1p(-gen.uniform()) : 0.0;
      v += lambda * oracle::box_mass(t.range, t.azimuth, mm.sigma_r, mm.sigma_theta, g.range_edge(ir),
                                     g.range_edge(ir + 1), g.azimuth_edge(ia), g.azimuth_edge(ia + 1), 2);
      f.at(ir, ia) = static_cast<float>(v);
    }
  return f;
}

// Plain trapezoid over lambda on a dense linear grid.
double evidence_oracle(const std::vector<double>& z, const std::vector<double>& nu,
                       const std::vector<double>& G, double a, double b) {
  double S = 0, zs = 0;
  for (std::size_t i = 0; i < z.size(); ++i) S += G[i], zs += z[i];
  const double hi = std::max(a / b + 40 * std::sqrt(a) / b, 4 * zs / S + 10) * 1.5;
  const int n = 400000;
  const double h = hi / n;
  std::vector<double> v(n + 1);
  double mx = -1e300;
  for (int j = 0; j <= n; ++j) {
    const double lam = j * h;
    double dl = -lam * S;
    for (std::size_t i = 0; i < z.size(); ++i) dl += z[i] * std::log1p(lam * G[i] / nu[i]);
    v[j] = dl + log_gamma_pdf(lam, a, b);
    mx = std::max(mx, v[j]);
  }
  double acc = 0;
  for (int j = 0; j <= n; ++j) acc += (j == 0 || j == n ? 0.5 : 1.0) * std::exp(v[j] - mx);
  return mx + std::log(acc * h);
}

}  // namespace

TEST_CASE("tbd_predict examples") {
  TbdConfig cfg;
  std::vector<TbdComponent> c{comp_at(3000, 0, 0.6)};
  const auto p = tbd_predict(c, MotionModel{}, cfg);
  CHECK(p[0].r == doctest::Approx(0.57).epsilon(1e-12));
  CHECK(p[0].r_pred == p[0].r);
  CHECK(p[0].alpha / p[0].beta == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(p[0].alpha < 20.0);
  CHECK(p[0].age == 1);
  cfg.eta = 1.0;
  const auto q = tbd_predict(c, MotionModel{}, cfg);
  CHECK(q[0].alpha == 20.0);
  CHECK(q[0].beta == 1.0);
}

TEST_CASE("rate_map_update examples") {
  RateUpdate u = rate_map_update(20, 1, 10);
  CHECK(u.a == 30);
  CHECK(u.b == 2);
  CHECK(u.lambda_hat == 14.5);
  u = rate_map_update(20, 1, 0);
  CHECK(u.lambda_hat == doctest::Approx(9.5));
  u = rate_map_update(0.5, 1, 0.2);
  CHECK(u.lambda_hat == 0.0);
  CHECK_THROWS_AS(rate_map_update(0, 1, 1), InvalidInput);
  CHECK_THROWS_AS(rate_map_update(1, 1, -1), InvalidInput);
}

TEST_CASE("existence_update examples") {
  CHECK(std::abs(existence_update(14.5, 20, 1, 500, 0.5) - 1.0) < 1e-12);
  CHECK(existence_update(1e-9, 20, 1, 500, 0.5) < 1e-100);
  CHECK(existence_update(3.0, 20, 1, 500, 1.0) == 1.0);
  CHECK(existence_update(3.0, 20, 1, 500, 0.0) == 0.0);
  CHECK_THROWS_AS(existence_update(1, 20, 1, 500, 1.5), InvalidInput);
}

TEST_CASE("property: existence_update is monotone in r_pred") {
  testgen::Gen g(61);
  for (int t = 0; t < 2000; ++t) {
    const double lam = g.log_uniform(1e-4, 100), a = g.log_uniform(0.3, 100), b = g.log_uniform(0.05, 10);
    const double ga = g.log_uniform(1, 1000);
    const double r1 = g.uniform(), r2 = g.uniform();
    const double u1 = existence_update(lam, a, b, ga, std::min(r1, r2));
    const double u2 = existence_update(lam, a, b, ga, std::max(r1, r2));
    CHECK(u1 <= u2 + 1e-15);
    CHECK(u1 >= 0.0);
    CHECK(u2 <= 1.0);
  }
}

TEST_CASE("merge is exact at r = 0 and r = 1") {
  GammaParams p = merge_existence_prior(1.0, 20, 1, 500);
  CHECK(p.a == 20);
  CHECK(p.b == 1);
  p = merge_existence_prior(0.0, 20, 1, 500);
  CHECK(p.a == 1);
  CHECK(p.b == 500);
  CHECK_THROWS_AS(merge_existence_prior(-0.1, 20, 1, 500), InvalidInput);
  CHECK_THROWS_AS(merge_existence_prior(0.5, 0, 1, 500), InvalidInput);
}

TEST_CASE("merge at r=0.5, Gamma(20,1), Exp(500) matches a grid-search KLD minimiser") {
  const auto [em, el] = oracle::mixture_moments(0.5, 20, 1, 500);
  // Cross entropy of the mixture against Gamma(a, b), up to a constant.
  auto ce = [&, em = em, el = el](double la, double lb) {
    const double a = std::exp(la), b = std::exp(lb);
    return -(a * std::log(b) - std::lgamma(a) + (a - 1) * el - b * em);
  };
  double ca = 0, cb = 0, span = 6;
  for (int round = 0; round < 60 && span > 1e-5; ++round) {
    double best = 1e300, ba = ca, bb = cb;
    for (int i = -20; i <= 20; ++i)
      for (int j = -20; j <= 20; ++j) {
        const double la = ca + span * i / 20, lb = cb + span * j / 20;
        const double v = ce(la, lb);
        if (v < best) best = v, ba = la, bb = lb;
      }
    ca = ba;
    cb = bb;
    span *= 0.5;
  }
  const GammaParams p = merge_existence_prior(0.5, 20, 1, 500);
  CHECK(std::abs(p.a / std::exp(ca) - 1) < 1e-3);
  CHECK(std::abs(p.b / std::exp(cb) - 1) < 1e-3);
}

TEST_CASE("property: merged Gamma matches the mixture moments") {
  testgen::Gen g(62);
  for (int t = 0; t < 100; ++t) {
    const double r = g.uniform(0.01, 0.99), al = g.log_uniform(0.5, 200), be = g.log_uniform(0.05, 20);
    const double ga = g.log_uniform(1, 1000);
    const GammaParams p = merge_existence_prior(r, al, be, ga);
    const auto [em, el] = oracle::mixture_moments(r, al, be, ga);
    CHECK(std::abs(p.a / p.b - em) <= 1e-8 * std::max(1.0, std::abs(em)));
    CHECK(std::abs(boost::math::digamma(p.a) - std::log(p.b) - el) <= 1e-8 * std::max(1.0, std::abs(el)));
  }
}

TEST_CASE("cell_mass: narrow spread lands in one cell") {
  const FrameGeometry g = sector();
  MeasurementModel mm;
  mm.sigma_r = 0.5;
  mm.sigma_theta = 1e-4;
  const PolarPoint c = g.cell_to_polar(10.5, 20.5);
  const GateWindow w = gate_window(c, mm.R(), 6.0, g);
  const CellMass cm = cell_mass(c, mm, g, w);
  CHECK(cm.at(10, 20) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(cm.total() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("cell_mass: mean on a boundary splits evenly") {
  const FrameGeometry g = sector();
  const MeasurementModel mm;
  const PolarPoint c = g.cell_to_polar(30.0, 20.5);
  const CellMass cm = cell_mass(c, mm, g, gate_window(c, mm.R(), 6.0, g));
  CHECK(std::abs(cm.at(29, 20) - cm.at(30, 20)) < 1e-9);
  CHECK(std::abs(cm.at(28, 20) - cm.at(31, 20)) < 1e-9);
}

TEST_CASE("property: cell_mass agrees with dense quadrature") {
  testgen::Gen g(63);
  const FrameGeometry geo = sector();
  const MeasurementModel mm;
  for (int t = 0; t < 20; ++t) {
    const PolarPoint c = geo.cell_to_polar(g.uniform(20, 44), g.uniform(20, 44));
    const GateWindow w = gate_window(c, mm.R(), 6.0, geo);
    const CellMass cm = cell_mass(c, mm, geo, w);
    double sum = 0;
    for (int ir = w.ir0; ir <= w.ir1; ++ir)
      for (int ia = w.ia0; ia <= w.ia1; ++ia) {
        const double ref = oracle::box_mass(c.range, c.azimuth, mm.sigma_r, mm.sigma_theta, geo.range_edge(ir),
                                            geo.range_edge(ir + 1), geo.azimuth_edge(ia), geo.azimuth_edge(ia + 1), 4);
        CHECK(std::abs(cm.at(ir, ia) - ref) < 1e-9);
        sum += cm.at(ir, ia);
      }
    const double whole = oracle::box_mass(c.range, c.azimuth, mm.sigma_r, mm.sigma_theta, geo.range_edge(w.ir0),
                                          geo.range_edge(w.ir1 + 1), geo.azimuth_edge(w.ia0),
                                          geo.azimuth_edge(w.ia1 + 1), 64);
    CHECK(std::abs(sum - whole) < 1e-6);
    CHECK(sum <= 1.0 + 1e-12);
    CHECK(sum > 0.99);
  }
}

TEST_CASE("expected_counts examples") {
  // Single component, no clutter: everything goes to it.
  auto n = expected_counts({1, 2, 3}, {0, 0, 0}, {{0.2, 0.5, 0.3}}, {7.0});
  CHECK(n[0] == 0.0);
  CHECK(n[1] == doctest::Approx(6.0).epsilon(1e-12));
  // Identical co-located components share equally.
  n = expected_counts({1, 2, 3}, {0, 0, 0}, {{0.2, 0.5, 0.3}, {0.2, 0.5, 0.3}}, {4.0, 4.0});
  CHECK(n[1] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(n[2] == doctest::Approx(3.0).epsilon(1e-12));
  // Three cells by hand.
  n = expected_counts({2, 0, 5}, {0.5, 0.5, 1.0}, {{0.1, 0.6, 0.3}, {0.4, 0.0, 0.2}}, {10.0, 5.0});
  // cell 0: nu = 0.5 + 1 + 2 = 3.5; cell 2: nu = 1 + 3 + 1 = 5.
  CHECK(std::abs(n[0] - (2 * 0.5 / 3.5 + 5 * 1.0 / 5)) < 1e-12);
  CHECK(std::abs(n[1] - (2 * 1.0 / 3.5 + 5 * 3.0 / 5)) < 1e-12);
  CHECK(std::abs(n[2] - (2 * 2.0 / 3.5 + 5 * 1.0 / 5)) < 1e-12);
  // A cell with no intensity model contributes nothing.
  n = expected_counts({4}, {0}, {{0}}, {1.0});
  CHECK(n[0] + n[1] == 0.0);
  CHECK_THROWS_AS(expected_counts({1}, {0, 0}, {{1}}, {1.0}), InvalidInput);
}

TEST_CASE("property: expected counts conserve mass and scale with the frame") {
  testgen::Gen g(64);
  for (int t = 0; t < 300; ++t) {
    const int n = g.integer(1, 12), M = g.integer(1, 4);
    std::vector<double> z(n), c(n), lam(M);
    std::vector<std::vector<double>> G(M, std::vector<double>(n));
    for (int i = 0; i < n; ++i) {
      z[i] = g.coin(0.2) ? 0.0 : g.log_uniform(1e-3, 50);
      c[i] = g.log_uniform(1e-3, 1);
    }
    for (int m = 0; m < M; ++m) {
      lam[m] = g.log_uniform(0.1, 100);
      for (int i = 0; i < n; ++i) G[m][i] = g.uniform();
    }
    const auto a = expected_counts(z, c, G, lam);
    double s = 0, zs = 0;
    for (double v : a) s += v;
    for (double v : z) zs += v;
    CHECK(std::abs(s - zs) <= 1e-9 * zs);
    const double k = g.log_uniform(0.1, 10);
    std::vector<double> zk = z;
    for (auto& v : zk) v *= k;
    const auto b = expected_counts(zk, c, G, lam);
    for (std::size_t m = 0; m < a.size(); ++m) CHECK(std::abs(b[m] - k * a[m]) <= 1e-9 * std::max(1.0, k * a[m]));
  }
}

TEST_CASE("synthetic measurement by hand") {
  const Eigen::Matrix2d R = MeasurementModel{}.R();
  const PolarPoint ctr{3000, 0.1};
  const std::vector<Eigen::Vector2d> off{{1.0, 0.01}, {-2.0, 0.02}};
  const auto s = synthetic_measurement({2, 6}, {4, 8}, {0.3, 0.5}, off, ctr, 10.0, R);
  REQUIRE(s.has_value());
  // weights 2*10*0.3/4 = 1.5 and 6*10*0.5/8 = 3.75
  CHECK(std::abs(s->weight - 5.25) < 1e-12);
  CHECK(std::abs(s->z.range - (3000 + (1.5 * 1.0 + 3.75 * -2.0) / 5.25)) < 1e-12);
  CHECK(std::abs(s->z.azimuth - (0.1 + (1.5 * 0.01 + 3.75 * 0.02) / 5.25)) < 1e-12);
  CHECK((s->R - R / 5.25).norm() < 1e-12 * R.norm());

  // Doubled intensities: same point, half the covariance.
  const auto d = synthetic_measurement({4, 12}, {4, 8}, {0.3, 0.5}, off, ctr, 10.0, R);
  CHECK(std::abs(d->z.range - s->z.range) < 1e-9);
  CHECK(std::abs(d->z.azimuth - s->z.azimuth) < 1e-12);
  CHECK((d->R - 0.5 * s->R).norm() < 1e-12 * R.norm());

  // Nothing attributed: no measurement.
  CHECK_FALSE(synthetic_measurement({0, 0}, {4, 8}, {0.3, 0.5}, off, ctr, 10.0, R).has_value());
}

TEST_CASE("synthetic measurement: one bright cell gives its conditional centroid") {
  const FrameGeometry g = sector();
  const MeasurementModel mm;
  const PolarPoint c = g.cell_to_polar(30.5, 30.5);
  const GateWindow w = gate_window(c, mm.R(), 6.0, g);
  const CellMass cm = cell_mass(c, mm, g, w);
  std::vector<double> z, nu, G;
  std::vector<Eigen::Vector2d> off;
  for (int ir = w.ir0; ir <= w.ir1; ++ir)
    for (int ia = w.ia0; ia <= w.ia1; ++ia) {
      z.push_back(ir == 30 && ia == 30 ? 50.0 : 0.0);
      nu.push_back(1.0);
      G.push_back(cm.at(ir, ia));
      off.emplace_back(cm.cr[ir - w.ir0], cm.ca[ia - w.ia0]);
    }
  const auto s = synthetic_measurement(z, nu, G, off, c, 20.0, mm.R());
  REQUIRE(s.has_value());
  CHECK(std::abs(s->z.range - c.range) < 1e-9);
  CHECK(std::abs(s->z.azimuth - c.azimuth) < 1e-12);
}

TEST_CASE("log_rate_evidence matches dense quadrature") {
  testgen::Gen g(65);
  for (int t = 0; t < 25; ++t) {
    const int n = g.integer(1, 30);
    std::vector<double> z(n), nu(n), G(n);
    const double lam = g.coin(0.5) ? g.uniform(0, 40) : 0.0;
    for (int i = 0; i < n; ++i) {
      G[i] = g.uniform(0, 0.2);
      nu[i] = g.log_uniform(0.02, 0.5);
      z[i] = -(nu[i] + lam * G[i]) * std::log1p(-g.uniform());
    }
    const double a = g.uniform(1, 30), b = a / g.log_uniform(1, 50);
    const double got = log_rate_evidence(z, nu, G, a, b);
    const double ref = evidence_oracle(z, nu, G, a, b);
    INFO("case " << t << " a=" << a << " b=" << b);
    CHECK(std::abs(got - ref) < 1e-6 * std::max(1.0, std::abs(ref)));
  }
  // No data: the integral is the prior mass.
  CHECK(std::abs(log_rate_evidence({0, 0}, {1, 1}, {0, 0}, 3, 2)) < 1e-9);
  CHECK_THROWS_AS(log_rate_evidence({1}, {1}, {1}, 0, 1), InvalidInput);
}

TEST_CASE("existence_from_evidence") {
  CHECK(existence_from_evidence(0.0, 0.3) == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(existence_from_evidence(50.0, 0.0) == 0.0);
  CHECK(existence_from_evidence(-50.0, 1.0) == 1.0);
  CHECK(existence_from_evidence(std::log(3.0), 0.5) == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(existence_from_evidence(-800, 0.5) >= 0.0);
  CHECK(existence_from_evidence(800, 0.5) == 1.0);
  CHECK_THROWS_AS(existence_from_evidence(NAN, 0.5), NumericalError);
  CHECK_THROWS_AS(existence_from_evidence(0, 2.0), InvalidInput);
}

TEST_CASE("EM on a frame of zeros keeps the prediction") {
  const FrameGeometry g = sector();
  TbdConfig cfg;
  auto comps = tbd_predict({comp_at(2500, 0.0)}, MotionModel{}, cfg);
  const StateDensity pred = comps[0].density;
  ClutterModel cl = make_clutter_model(g, 3000);
  em_update(comps, make_frame(g), cl, MeasurementModel{}, cfg);
  CHECK((comps[0].density.mean - pred.mean).norm() == 0.0);
  CHECK((comps[0].density.cov - pred.cov).norm() == 0.0);
  const double expect = (comps[0].prior_a - 1) / (comps[0].prior_b + 1);
  CHECK(comps[0].lambda_hat == doctest::Approx(expect).epsilon(1e-6));
  CHECK(comps[0].n_bar == 0.0);
}

TEST_CASE("EM pulls a component onto a bright target") {
  const FrameGeometry g = sector();
  const PolarPoint truth = g.cell_to_polar(32.5, 32.5);
  const RadarFrame f = render(g, truth, 200.0, 0.1, 7);
  TbdConfig cfg;
  cfg.em_max_iters = 5;
  // Two cells off in both directions.
  auto comps = tbd_predict({comp_at(truth.range + 2 * g.range_res, truth.azimuth - 2 * g.azimuth_res)},
                           MotionModel{}, cfg);
  comps[0].density.cov = Eigen::Vector4d(2500, 25, 2500, 25).asDiagonal();
  ClutterModel cl = make_clutter_model(g, 3000);
  EmTrace tr;
  em_update(comps, f, cl, MeasurementModel{}, cfg, &tr);
  const PolarPoint est = cartesian_to_polar(comps[0].density.mean);
  CHECK(tr.iterations <= 5);
  CHECK(std::abs(est.range - truth.range) < g.range_res);
  CHECK(std::abs(est.azimuth - truth.azimuth) < g.azimuth_res);
  CHECK(comps[0].lambda_hat > 100);
  CHECK(comps[0].log_evidence > 20);
  tbd_existence_update(comps, cfg);
  CHECK(comps[0].r > 0.99);
}

TEST_CASE("property: EM objective is non-decreasing and mass is conserved") {
  testgen::Gen gen(66);
  const FrameGeometry g = sector(32, 32);
  for (int t = 0; t < 15; ++t) {
    const int nc = gen.integer(1, 3);
    RadarFrame f = render(g, g.cell_to_polar(gen.uniform(8, 24), gen.uniform(8, 24)), gen.uniform(0, 80), 0.1, 100 + t);
    std::vector<TbdComponent> comps;
    for (int m = 0; m < nc; ++m) {
      const PolarPoint p = g.cell_to_polar(gen.uniform(6, 26), gen.uniform(6, 26));
      comps.push_back(comp_at(p.range, p.azimuth));
    }
    TbdConfig cfg;
    cfg.em_rel_tol = 0;
    comps = tbd_predict(comps, MotionModel{}, cfg);
    ClutterModel cl = make_clutter_model(g, 3000);
    EmTrace tr;
    em_update(comps, f, cl, MeasurementModel{}, cfg, &tr);
    for (std::size_t i = 1; i < tr.objective.size(); ++i)
      CHECK(tr.objective[i] - tr.objective[i - 1] >= -1e-9 * std::max(1.0, std::abs(tr.objective[i])));
    for (double gain : tr.aux_gain) CHECK(gain >= -1e-9);
    for (double res : tr.mass_residual) CHECK(res < 1e-9);
  }
}

TEST_CASE("adaptive birth") {
  const FrameGeometry g = sector();
  TbdConfig cfg;
  const MeasurementModel mm;
  Cluster cl;
  cl.centroid = {3000, 0.0};
  TrackEstimate near, far;
  near.mean << 3050, 0, 0, 0;
  far.mean << 3150, 0, 0, 0;
  long next = 10;
  CHECK(adaptive_birth({cl}, {near}, {}, mm, cfg, g, &next, 4).empty());
  const auto born = adaptive_birth({cl}, {far}, {}, mm, cfg, g, &next, 4);
  REQUIRE(born.size() == 1);
  CHECK(born[0].r == 1e-4);
  CHECK(born[0].label == 10);
  CHECK(born[0].birth_time == 4);
  CHECK_FALSE(born[0].confirmed);
  CHECK(born[0].density.mean(0) == doctest::Approx(3000));
  CHECK(born[0].density.mean(1) == 0.0);
  CHECK(next == 11);
  CHECK(adaptive_birth({}, {}, {}, mm, cfg, g, &next, 4).empty());
  // Inside the gate of an existing component: no second birth.
  CHECK(adaptive_birth({cl}, {}, born, mm, cfg, g, &next, 5).empty());
  // Two clusters on top of each other: one birth.
  CHECK(adaptive_birth({cl, cl}, {}, {}, mm, cfg, g, &next, 5).size() == 1);
}

TEST_CASE("tbd_manage confirms, keeps confirmation and deletes") {
  TbdConfig cfg;
  std::vector<TbdComponent> c{comp_at(3000, 0, 0.6), comp_at(4000, 0, 5e-4), comp_at(5000, 0, 0.3)};
  c[0].label = 1;
  c[1].label = 2;
  c[2].label = 3;
  auto est = tbd_manage(c, cfg);
  REQUIRE(c.size() == 2);
  REQUIRE(est.size() == 1);
  CHECK(est[0].label == 1);
  c[0].r = 0.3;
  est = tbd_manage(c, cfg);
  REQUIRE(est.size() == 1);
  CHECK(est[0].label == 1);
}

TEST_CASE("TBD components yield to PMBM after consecutive overlaps") {
  TbdConfig cfg;
  std::vector<TbdComponent> c{comp_at(3000, 0), comp_at(5000, 0)};
  TrackEstimate e;
  e.mean << 3020, 0, 0, 0;
  yield_to_pmbm(c, {e}, cfg);
  yield_to_pmbm(c, {e}, cfg);
  CHECK(c.size() == 2);
  yield_to_pmbm(c, {}, cfg);  // resets the count
  yield_to_pmbm(c, {e}, cfg);
  yield_to_pmbm(c, {e}, cfg);
  CHECK(c.size() == 2);
  yield_to_pmbm(c, {e}, cfg);
  REQUIRE(c.size() == 1);
  CHECK(c[0].density.mean(0) == doctest::Approx(5000));
  cfg.yield_frames = 0;
  std::vector<TbdComponent> d{comp_at(3000, 0)};
  for (int i = 0; i < 5; ++i) yield_to_pmbm(d, {e}, cfg);
  CHECK(d.size() == 1);
}

TEST_CASE("rate-density mode uses the plug-in existence update") {
  TbdConfig cfg;
  cfg.existence_mode = ExistenceMode::RateDensity;
  TbdComponent c = comp_at(3000, 0);
  c.r_pred = 0.5;
  c.lambda_hat = 14.5;
  c.post_a = 30;
  c.post_b = 2;
  std::vector<TbdComponent> v{c};
  tbd_existence_update(v, cfg);
  CHECK(v[0].r == doctest::Approx(existence_update(14.5, 20, 1, 500, 0.5)));
  CHECK(v[0].alpha == 30);
  CHECK(v[0].beta == 2);
}

TEST_CASE("property: existence stays in [0,1] over random TBD runs") {
  testgen::Gen gen(67);
  const FrameGeometry g = sector(32, 32);
  TbdConfig cfg;
  const MeasurementModel mm;
  std::vector<TbdComponent> comps;
  ClutterModel cl = make_clutter_model(g, 3000);
  long next = 1;
  for (int k = 0; k < 12; ++k) {
    const RadarFrame f = render(g, g.cell_to_polar(gen.uniform(4, 28), gen.uniform(4, 28)), gen.uniform(0, 60), 0.1, 300 + k);
    auto pred = tbd_predict(comps, MotionModel{}, cfg);
    std::vector<Cluster> clusters;
    for (int b = 0; b < 2; ++b) {
      Cluster c;
      c.centroid = g.cell_to_polar(gen.uniform(4, 28), gen.uniform(4, 28));
      clusters.push_back(c);
    }
    auto born = tbd_predict(adaptive_birth(clusters, {}, pred, mm, cfg, g, &next, k), MotionModel{}, cfg);
    pred.insert(pred.end(), born.begin(), born.end());
    em_update(pred, f, cl, mm, cfg);
    tbd_existence_update(pred, cfg);
    tbd_manage(pred, cfg);
    for (const auto& c : pred) {
      CHECK(c.r >= 0.0);
      CHECK(c.r <= 1.0);
      CHECK(c.alpha > 0.0);
      CHECK(c.beta > 0.0);
    }
    comps = pred;
  }
}
