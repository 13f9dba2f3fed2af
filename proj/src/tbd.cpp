#include "hytrack/tbd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "hytrack/errors.hpp"

namespace hytrack {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

double phi(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

// Mass of N(0,1) on [a,b] and the conditional mean there.
void std_interval(double a, double b, double* mass, double* mean) {
  double m;
  if (a >= 0) m = 0.5 * (std::erfc(a / kSqrt2) - std::erfc(b / kSqrt2));
  else if (b <= 0) m = 0.5 * (std::erfc(-b / kSqrt2) - std::erfc(-a / kSqrt2));
  else m = 1.0 - 0.5 * std::erfc(b / kSqrt2) - 0.5 * std::erfc(-a / kSqrt2);
  *mass = std::max(0.0, m);
  if (m > 1e-300) {
    *mean = (phi(a) - phi(b)) / m;
    *mean = std::clamp(*mean, a, b);
  } else {
    *mean = 0.5 * (a + b);
  }
}

double xlogy(double x, double y) {
  if (x == 0) return 0.0;
  return x * std::log(y);
}

}  // namespace

void TbdConfig::validate() const {
  if (!(p_s >= 0 && p_s <= 1) || !(p_b > 0 && p_b < 1)) throw ConfigError("tbd: p_s/p_b out of range");
  if (!(t_c > 0 && t_c < 1) || !(t_d > 0 && t_d < 1)) throw ConfigError("tbd: thresholds must lie in (0,1)");
  if (em_max_iters < 1) throw ConfigError("tbd: em_max_iters must be >= 1");
  if (!(em_rel_tol >= 0)) throw ConfigError("tbd: em_rel_tol must be >= 0");
  if (!(gate_sigma > 0)) throw ConfigError("tbd: gate_sigma must be positive");
  if (!(alpha0 > 0 && beta0 > 0 && gamma0 > 0)) throw ConfigError("tbd: prior parameters must be positive");
  if (!(eta >= 1)) throw ConfigError("tbd: eta must be >= 1");
  if (!(birth_merge_r >= 0 && birth_merge_r <= 1)) throw ConfigError("tbd: birth_merge_r out of range");
  if (!(intensity_scale > 0)) throw ConfigError("tbd: intensity_scale must be positive");
  if (iekf_iters < 1) throw ConfigError("tbd: iekf_iters must be >= 1");
  if (yield_frames < 0) throw ConfigError("tbd: yield_frames must be >= 0");
  if (std::isnan(fluctuation_shape)) throw ConfigError("tbd: fluctuation_shape must be a number");
}

double log_gamma_pdf(double x, double a, double b) {
  if (x < 0) return -kInf;
  if (x == 0) {
    if (a > 1) return -kInf;
    if (a < 1) return kInf;
    return std::log(b);
  }
  return a * std::log(b) - std::lgamma(a) + (a - 1) * std::log(x) - b * x;
}

double log_exponential_pdf(double x, double rate) {
  if (x < 0) return -kInf;
  return std::log(rate) - rate * x;
}

GammaParams merge_existence_prior(double r, double alpha, double beta, double gamma_ne) {
  if (!(r >= 0 && r <= 1)) throw InvalidInput("merge_existence_prior: r outside [0,1]");
  if (!(alpha > 0 && beta > 0 && gamma_ne > 0))
    throw InvalidInput("merge_existence_prior: parameters must be positive");
  if (r == 1.0) return {alpha, beta};
  if (r == 0.0) return {1.0, gamma_ne};
  using boost::math::digamma;
  using boost::math::trigamma;
  const double mean = r * alpha / beta + (1 - r) / gamma_ne;
  const double mlog = r * (digamma(alpha) - std::log(beta)) + (1 - r) * (digamma(1.0) - std::log(gamma_ne));
  const double s = std::log(mean) - mlog;
  if (!(s > 0)) {
    // Mixture numerically indistinguishable from a point mass.
    return r >= 0.5 ? GammaParams{alpha, beta} : GammaParams{1.0, gamma_ne};
  }
  double a = (3 - s + std::sqrt((s - 3) * (s - 3) + 24 * s)) / (12 * s);
  double f = 0.0;
  for (int it = 0; it < 100; ++it) {
    f = std::log(a) - digamma(a) - s;
    const double fp = 1.0 / a - trigamma(a);
    double next = a - f / fp;
    if (!(next > 0)) next = 0.5 * a;
    const double step = std::abs(next - a);
    a = next;
    if (step <= 1e-15 * a) {
      f = std::log(a) - digamma(a) - s;
      return {a, a / mean};
    }
  }
  f = std::log(a) - digamma(a) - s;
  if (std::abs(f) < 1e-12 * std::max(1.0, s)) return {a, a / mean};
  std::ostringstream os;
  os << "merge_existence_prior: Newton did not converge (residual " << f << ")";
  throw NumericalError(os.str());
}

RateUpdate rate_map_update(double alpha, double beta, double n_bar) {
  if (!(alpha > 0 && beta > 0)) throw InvalidInput("rate_map_update: alpha and beta must be positive");
  if (!(n_bar >= 0)) throw InvalidInput("rate_map_update: negative expected count");
  RateUpdate u;
  u.a = alpha + n_bar;
  u.b = beta + 1.0;
  u.lambda_hat = std::max(0.0, (u.a - 1.0) / u.b);
  return u;
}

double existence_update(double lambda_hat, double alpha, double beta, double gamma_ne, double r_pred) {
  if (!(r_pred >= 0 && r_pred <= 1)) throw InvalidInput("existence_update: r_pred outside [0,1]");
  if (!(lambda_hat >= 0)) throw InvalidInput("existence_update: negative rate");
  if (r_pred == 0.0) return 0.0;
  const double lg = log_gamma_pdf(lambda_hat, alpha, beta);
  const double le = log_exponential_pdf(lambda_hat, gamma_ne);
  if (r_pred == 1.0) return lg > -kInf ? 1.0 : r_pred;
  const double num = lg + std::log(r_pred);
  const double alt = le + std::log1p(-r_pred);
  if (num == -kInf && alt == -kInf) return r_pred;
  if (num == kInf) return 1.0;
  if (num == -kInf) return 0.0;
  return 1.0 / (1.0 + std::exp(alt - num));
}

double log_rate_evidence(const std::vector<double>& z, const std::vector<double>& nu_other,
                         const std::vector<double>& G, double a, double b) {
  const std::size_t n = z.size();
  if (nu_other.size() != n || G.size() != n) throw InvalidInput("log_rate_evidence: size mismatch");
  if (!(a > 0 && b > 0)) throw InvalidInput("log_rate_evidence: Gamma parameters must be positive");
  std::vector<double> zz, ratio;
  double S = 0.0, zsum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    S += G[i];
    if (z[i] > 0 && G[i] > 0) {
      zz.push_back(z[i]);
      ratio.push_back(G[i] / std::max(nu_other[i], 1e-300));
      zsum += z[i];
    }
  }
  auto dl = [&](double lam) {
    double v = -lam * S;
    for (std::size_t i = 0; i < zz.size(); ++i) v += zz[i] * std::log1p(lam * ratio[i]);
    return v;
  };
  const double lgb = a * std::log(b) - std::lgamma(a);
  // Integrand in u = log(lambda), including the Jacobian.
  auto h = [&](double u) {
    const double lam = std::exp(u);
    return dl(lam) + lgb + a * u - b * lam;
  };
  const double hi = std::max(a / b + 40.0 * std::sqrt(a) / b + 40.0 / b, 4.0 * zsum / std::max(S, 1e-6) + 10.0);
  const double lo = 1e-12 * hi;
  const double u0 = std::log(lo), u1 = std::log(hi);

  auto integrate = [&](double ua, double ub, int nodes, double* peak_u, double* width) {
    const double du = (ub - ua) / (nodes - 1);
    std::vector<double> v(nodes);
    double mx = -kInf;
    int arg = 0;
    for (int j = 0; j < nodes; ++j) {
      v[j] = h(ua + j * du);
      if (v[j] > mx) mx = v[j], arg = j;
    }
    double acc = 0.0;
    for (int j = 0; j < nodes; ++j) acc += (j == 0 || j == nodes - 1 ? 0.5 : 1.0) * std::exp(v[j] - mx);
    if (peak_u) *peak_u = ua + arg * du;
    if (width) {
      // Extent where the integrand is within e^-40 of the peak.
      int l = arg, r = arg;
      while (l > 0 && v[l] > mx - 40) --l;
      while (r < nodes - 1 && v[r] > mx - 40) ++r;
      *width = (r - l) * du;
      *peak_u = ua + l * du;
    }
    return mx + std::log(acc * du);
  };
  double ul, w;
  integrate(u0, u1, 400, &ul, &w);
  const double ua = std::max(u0, ul), ub = std::min(u1, ul + std::max(w, 1e-3));
  const double body = integrate(ua, ub, 800, nullptr, nullptr);
  // Mass below the grid, where dl is ~0.
  const double tail = std::log(boost::math::gamma_p(a, b * std::exp(ua)));
  if (tail == -kInf) return body;
  const double m = std::max(body, tail);
  return m + std::log(std::exp(body - m) + std::exp(tail - m));
}

double existence_from_evidence(double log_bf, double r_pred) {
  if (!(r_pred >= 0 && r_pred <= 1)) throw InvalidInput("existence_from_evidence: r_pred outside [0,1]");
  if (std::isnan(log_bf)) throw NumericalError("existence_from_evidence: NaN evidence");
  if (r_pred == 0.0 || r_pred == 1.0) return r_pred;
  const double lo = std::log(r_pred) - std::log1p(-r_pred) + log_bf;
  return lo >= 0 ? 1.0 / (1.0 + std::exp(-lo)) : std::exp(lo) / (1.0 + std::exp(lo));
}

ClutterModel make_clutter_model(const FrameGeometry& g, double r0, double lambda0) {
  if (!(r0 > 0)) throw InvalidInput("clutter model: r0 must be positive");
  ClutterModel c;
  c.lambda0 = lambda0;
  c.r0 = r0;
  c.range_profile.resize(g.n_range);
  double sum = 0.0;
  for (int ir = 0; ir < g.n_range; ++ir) {
    const double a = g.range_edge(ir), b = g.range_edge(ir + 1);
    // r0 * (exp(-a/r0) - exp(-b/r0)), scaled by exp(offset/r0) to keep far cells representable.
    const double v = -r0 * std::exp(-(a - g.range_offset) / r0) * std::expm1(-(b - a) / r0);
    c.range_profile[ir] = v;
    sum += v;
  }
  for (double& v : c.range_profile) v /= sum;
  return c;
}

int wrap_azimuth_index(int ia, const FrameGeometry& g) {
  if (!g.full_circle()) return ia;
  ia %= g.n_azimuth;
  return ia < 0 ? ia + g.n_azimuth : ia;
}

GateWindow gate_window(const PolarPoint& c, const Eigen::Matrix2d& S, double gate_sigma,
                       const FrameGeometry& g) {
  GateWindow w;
  const double fr = g.range_coord(c.range);
  const double hr = gate_sigma * std::sqrt(std::max(S(0, 0), 0.0)) / g.range_res;
  const double fa = g.azimuth_coord(c.azimuth);
  const double ha = gate_sigma * std::sqrt(std::max(S(1, 1), 0.0)) / g.azimuth_res;
  if (!std::isfinite(fr) || !std::isfinite(fa) || !std::isfinite(hr) || !std::isfinite(ha)) return w;
  const double lo_r = fr - hr, hi_r = fr + hr;
  if (hi_r < 0 || lo_r > g.n_range) return w;
  w.ir0 = std::max(0, static_cast<int>(std::floor(lo_r)));
  w.ir1 = std::min(g.n_range - 1, static_cast<int>(std::floor(hi_r)));
  if (g.full_circle()) {
    const double half = std::min(ha, 0.5 * g.n_azimuth - 0.5);
    w.ia0 = static_cast<int>(std::floor(fa - half));
    w.ia1 = static_cast<int>(std::floor(fa + half));
  } else {
    if (fa + ha < 0 || fa - ha > g.n_azimuth) return GateWindow{};
    w.ia0 = std::max(0, static_cast<int>(std::floor(fa - ha)));
    w.ia1 = std::min(g.n_azimuth - 1, static_cast<int>(std::floor(fa + ha)));
  }
  return w;
}

double CellMass::total() const {
  double a = 0, b = 0;
  for (double v : pr) a += v;
  for (double v : pa) b += v;
  return a * b;
}

CellMass cell_mass(const PolarPoint& c, const MeasurementModel& mm, const FrameGeometry& g,
                   const GateWindow& win) {
  CellMass cm;
  cm.win = win;
  if (win.empty()) return cm;
  const double sr = mm.sigma_r, sa = mm.sigma_theta;
  const int nr = win.ir1 - win.ir0 + 1, na = win.ia1 - win.ia0 + 1;
  cm.pr.resize(nr);
  cm.cr.resize(nr);
  for (int j = 0; j < nr; ++j) {
    const int ir = win.ir0 + j;
    double m, mu;
    std_interval((g.range_edge(ir) - c.range) / sr, (g.range_edge(ir + 1) - c.range) / sr, &m, &mu);
    cm.pr[j] = m;
    cm.cr[j] = sr * mu;
  }
  // Centre in the window's unwrapped azimuth coordinate.
  double fa = g.azimuth_coord(c.azimuth);
  if (g.full_circle()) {
    const double mid = 0.5 * (win.ia0 + win.ia1 + 1);
    fa += g.n_azimuth * std::round((mid - fa) / g.n_azimuth);
  }
  cm.pa.resize(na);
  cm.ca.resize(na);
  for (int j = 0; j < na; ++j) {
    const int ia = win.ia0 + j;
    double m, mu;
    std_interval((ia - fa) * g.azimuth_res / sa, (ia + 1 - fa) * g.azimuth_res / sa, &m, &mu);
    cm.pa[j] = m;
    cm.ca[j] = sa * mu;
  }
  return cm;
}

std::vector<double> expected_counts(const std::vector<double>& z, const std::vector<double>& clutter,
                                    const std::vector<std::vector<double>>& G,
                                    const std::vector<double>& lambda) {
  const std::size_t n = z.size();
  const std::size_t M = G.size();
  if (clutter.size() != n || lambda.size() != M) throw InvalidInput("expected_counts: size mismatch");
  for (const auto& g : G)
    if (g.size() != n) throw InvalidInput("expected_counts: mass vector size mismatch");
  std::vector<double> out(M + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (z[i] == 0) continue;
    double nu = clutter[i];
    for (std::size_t m = 0; m < M; ++m) nu += lambda[m] * G[m][i];
    if (!(nu > 0)) continue;
    out[0] += z[i] * clutter[i] / nu;
    for (std::size_t m = 0; m < M; ++m) out[m + 1] += z[i] * lambda[m] * G[m][i] / nu;
  }
  return out;
}

std::optional<SyntheticMeasurement> synthetic_measurement(
    const std::vector<double>& z, const std::vector<double>& nu, const std::vector<double>& G,
    const std::vector<Eigen::Vector2d>& off, const PolarPoint& centre, double lambda,
    const Eigen::Matrix2d& R, bool impute_outside) {
  const std::size_t n = z.size();
  if (nu.size() != n || G.size() != n || off.size() != n)
    throw InvalidInput("synthetic_measurement: size mismatch");
  double W = 0.0;
  Eigen::Vector2d num = Eigen::Vector2d::Zero();
  double mass = 0.0;
  Eigen::Vector2d first = Eigen::Vector2d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    mass += G[i];
    first += G[i] * off[i];
    if (z[i] == 0 || !(nu[i] > 0)) continue;
    const double w = z[i] * lambda * G[i] / nu[i];
    W += w;
    num += w * off[i];
  }
  if (impute_outside) {
    const double out = lambda * std::max(0.0, 1.0 - mass);
    W += out;
    num -= lambda * first;
  }
  if (!(W > 1e-12)) return std::nullopt;
  SyntheticMeasurement s;
  s.weight = W;
  s.z.range = centre.range + num(0) / W;
  s.z.azimuth = wrap_angle(centre.azimuth + num(1) / W);
  s.R = R / W;
  return s;
}

namespace {

struct Work {
  bool active = false;
  GateWindow win;
  StateDensity pred;
  StateVec x = StateVec::Zero();
  StateCov P = StateCov::Zero();
  double lambda = 0.0;
  std::vector<int> local;  // window cell -> support index
  CellMass cm;
  std::vector<double> G;
  double mass = 0.0;
  double n_in = 0.0;
  bool updated = false;
};

double log_prior_state(const Work& w) {
  return log_gaussian(w.x - w.pred.mean, w.pred.cov);
}

double data_quadratic(const StateVec& x, const PolarPoint& zt, const Eigen::Matrix2d& Rinv) {
  const Eigen::Vector2d d = polar_innovation(zt, x);
  return d.dot(Rinv * d);
}

}  // namespace

void em_update(std::vector<TbdComponent>& comps, const RadarFrame& frame, ClutterModel& clutter,
               const MeasurementModel& mm, const TbdConfig& cfg, EmTrace* trace,
               const LandMask* mask) {
  const FrameGeometry& g = frame.geom;
  if (clutter.range_profile.size() != static_cast<std::size_t>(g.n_range))
    throw InvalidInput("em_update: clutter profile does not match frame");
  const std::size_t M = comps.size();
  const double scale = cfg.intensity_scale;
  const Eigen::Matrix2d R = mm.R();
  const Eigen::Matrix2d Rinv = R.inverse();

  std::vector<Work> work(M);
  std::vector<int> local_of(g.size(), -1);
  std::vector<std::size_t> support;
  for (std::size_t m = 0; m < M; ++m) {
    Work& w = work[m];
    const TbdComponent& c = comps[m];
    w.pred = c.density;
    w.x = c.density.mean;
    w.P = c.density.cov;
    w.lambda = c.alpha / c.beta;
    if (std::hypot(w.x(0), w.x(2)) <= 0) continue;
    const Eigen::Matrix2d S = innovation_covariance(c.density, mm);
    w.win = gate_window(cartesian_to_polar(w.x), S, cfg.gate_sigma, g);
    if (w.win.empty()) continue;
    w.active = true;
    for (int ir = w.win.ir0; ir <= w.win.ir1; ++ir) {
      for (int ia = w.win.ia0; ia <= w.win.ia1; ++ia) {
        const std::size_t gi = g.index(ir, wrap_azimuth_index(ia, g));
        if (local_of[gi] < 0) {
          local_of[gi] = static_cast<int>(support.size());
          support.push_back(gi);
        }
        w.local.push_back(local_of[gi]);
      }
    }
  }

  // Clutter rate from unmasked cells outside every gate.
  {
    double zs = 0.0, ps = 0.0;
    for (int ir = 0; ir < g.n_range; ++ir) {
      const double p0 = clutter.cell_prob(ir, g.n_azimuth);
      for (int ia = 0; ia < g.n_azimuth; ++ia) {
        const std::size_t gi = g.index(ir, ia);
        if (local_of[gi] >= 0 || (mask && mask->cells[gi])) continue;
        zs += frame.z[gi] / scale;
        ps += p0;
      }
    }
    if (ps > 0) clutter.lambda0 = zs / ps;
  }

  const std::size_t U = support.size();
  std::vector<double> z(U), c(U), nu(U);
  double zsum = 0.0, csum = 0.0;
  for (std::size_t j = 0; j < U; ++j) {
    const std::size_t gi = support[j];
    const int ir = static_cast<int>(gi / g.n_azimuth);
    z[j] = (mask && mask->cells[gi]) ? 0.0 : frame.z[gi] / scale;
    c[j] = clutter.lambda0 * clutter.cell_prob(ir, g.n_azimuth);
    zsum += z[j];
    csum += c[j];
  }

  auto e_step = [&]() {
    for (auto& w : work) {
      if (!w.active) continue;
      const PolarPoint ctr = cartesian_to_polar(w.x);
      w.cm = cell_mass(ctr, mm, g, w.win);
      w.G.resize(w.local.size());
      std::size_t t = 0;
      for (int ir = w.win.ir0; ir <= w.win.ir1; ++ir)
        for (int ia = w.win.ia0; ia <= w.win.ia1; ++ia) w.G[t++] = w.cm.at(ir, ia);
      w.mass = w.cm.total();
    }
    nu = c;
    for (const auto& w : work) {
      if (!w.active) continue;
      for (std::size_t t = 0; t < w.local.size(); ++t) nu[w.local[t]] += w.lambda * w.G[t];
    }
    double J = -csum;
    for (std::size_t j = 0; j < U; ++j) {
      if (z[j] == 0) continue;
      J += nu[j] > 0 ? z[j] * std::log(nu[j]) : -kInf;
    }
    double nsum = 0.0;
    for (std::size_t j = 0; j < U; ++j)
      if (z[j] > 0 && nu[j] > 0) nsum += z[j] * c[j] / nu[j];
    for (std::size_t m = 0; m < M; ++m) {
      Work& w = work[m];
      if (!w.active) continue;
      w.n_in = 0.0;
      for (std::size_t t = 0; t < w.local.size(); ++t) {
        const int j = w.local[t];
        if (z[j] > 0 && nu[j] > 0) w.n_in += z[j] * w.lambda * w.G[t] / nu[j];
      }
      nsum += w.n_in;
      J += -w.lambda * w.mass + log_gamma_pdf(w.lambda, comps[m].prior_a, comps[m].prior_b) +
           log_prior_state(w);
    }
    if (trace) {
      trace->objective.push_back(J);
      trace->mass_residual.push_back(std::abs(nsum - zsum) / std::max(zsum, 1e-300));
    }
    return J;
  };

  auto m_step = [&]() {
    double gain = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      Work& w = work[m];
      TbdComponent& comp = comps[m];
      if (!w.active) continue;
      const double n_tot = w.n_in + w.lambda * std::max(0.0, 1.0 - w.mass);
      const RateUpdate ru = rate_map_update(comp.prior_a, comp.prior_b, n_tot);
      const double lam_old = w.lambda;

      const PolarPoint ctr = cartesian_to_polar(w.x);
      std::vector<double> zl(w.local.size()), nl(w.local.size());
      std::vector<Eigen::Vector2d> off(w.local.size());
      std::size_t t = 0;
      for (int ir = w.win.ir0; ir <= w.win.ir1; ++ir) {
        for (int ia = w.win.ia0; ia <= w.win.ia1; ++ia, ++t) {
          zl[t] = z[w.local[t]];
          nl[t] = nu[w.local[t]];
          off[t] = {w.cm.cr[ir - w.win.ir0], w.cm.ca[ia - w.win.ia0]};
        }
      }
      const auto sm = synthetic_measurement(zl, nl, w.G, off, ctr, lam_old, R, true);

      const StateVec x_old = w.x;
      if (sm && w.n_in > 1e-12) {
        const EkfResult res = ekf_polar_update(w.pred, sm->z, sm->R, cfg.iekf_iters);
        w.x = res.posterior.mean;
        w.P = res.posterior.cov;
        w.updated = true;
        const double q_new = log_gaussian(w.x - w.pred.mean, w.pred.cov) -
                             0.5 * sm->weight * data_quadratic(w.x, sm->z, Rinv);
        const double q_old = log_gaussian(x_old - w.pred.mean, w.pred.cov) -
                             0.5 * sm->weight * data_quadratic(x_old, sm->z, Rinv);
        gain += q_new - q_old;
      } else {
        gain += log_gaussian(w.pred.mean - w.pred.mean, w.pred.cov) -
                log_gaussian(x_old - w.pred.mean, w.pred.cov);
        w.x = w.pred.mean;
        w.P = w.pred.cov;
        w.updated = false;
      }
      auto q_rate = [&](double lam) {
        return log_gamma_pdf(lam, comp.prior_a, comp.prior_b) + xlogy(n_tot, lam) - lam;
      };
      const double dq = q_rate(ru.lambda_hat) - q_rate(lam_old);
      if (!std::isnan(dq)) gain += dq;
      w.lambda = ru.lambda_hat;
      comp.n_bar = w.n_in;
      comp.post_a = ru.a;
      comp.post_b = ru.b;
    }
    if (trace) trace->aux_gain.push_back(gain);
  };

  int iters = 0;
  double J = e_step();
  for (int it = 0; it < cfg.em_max_iters; ++it) {
    m_step();
    ++iters;
    const double Jn = e_step();
    const double rel = std::abs(Jn - J) / std::max(1.0, std::abs(Jn));
    J = Jn;
    if (std::isfinite(Jn) && rel < cfg.em_rel_tol) break;
  }
  if (trace) trace->iterations = iters;

  for (std::size_t m = 0; m < M; ++m) {
    Work& w = work[m];
    TbdComponent& comp = comps[m];
    if (!w.active) {
      const RateUpdate ru = rate_map_update(comp.prior_a, comp.prior_b, 0.0);
      comp.lambda_hat = ru.lambda_hat;
      comp.post_a = ru.a;
      comp.post_b = ru.b;
      comp.n_bar = 0.0;
      comp.log_evidence = 0.0;
      continue;
    }
    comp.density.mean = w.x;
    comp.density.cov = w.P;
    comp.lambda_hat = w.lambda;
    if (cfg.existence_mode == ExistenceMode::Evidence) {
      // nu and G are current after the last E-step.
      std::vector<double> zl(w.local.size()), other(w.local.size());
      for (std::size_t t = 0; t < w.local.size(); ++t) {
        zl[t] = z[w.local[t]];
        other[t] = nu[w.local[t]] - w.lambda * w.G[t];
      }
      double a = comp.alpha, b = comp.beta;
      if (cfg.fluctuation_shape > 0 && a > cfg.fluctuation_shape) {
        b *= cfg.fluctuation_shape / a;
        a = cfg.fluctuation_shape;
      }
      comp.log_evidence = log_rate_evidence(zl, other, w.G, a, b) -
                          log_rate_evidence(zl, other, w.G, 1.0, comp.gamma_ne);
    }
  }
}

std::vector<TbdComponent> tbd_predict(const std::vector<TbdComponent>& comps, const MotionModel& model,
                                      const TbdConfig& cfg) {
  std::vector<TbdComponent> out = comps;
  for (auto& c : out) {
    c.r = cfg.p_s * c.r;
    c.r_pred = c.r;
    c.density = cv_predict(c.density, model);
    c.alpha /= cfg.eta;
    c.beta /= cfg.eta;
    if (cfg.existence_mode == ExistenceMode::Evidence) {
      // Existence is settled by the evidence ratio; the EM sees the rate given existence.
      c.prior_a = c.alpha;
      c.prior_b = c.beta;
    } else {
      const double rm = c.age == 0 ? cfg.birth_merge_r : c.r_pred;
      const GammaParams gp = merge_existence_prior(rm, c.alpha, c.beta, c.gamma_ne);
      c.prior_a = gp.a;
      c.prior_b = gp.b;
    }
    c.age += 1;
  }
  return out;
}

void tbd_existence_update(std::vector<TbdComponent>& comps, const TbdConfig& cfg) {
  for (auto& c : comps) {
    if (cfg.existence_mode == ExistenceMode::Evidence)
      c.r = existence_from_evidence(c.log_evidence, c.r_pred);
    else
      c.r = existence_update(c.lambda_hat, c.alpha, c.beta, c.gamma_ne, c.r_pred);
    c.alpha = c.post_a;
    c.beta = c.post_b;
  }
}

std::vector<TbdComponent> adaptive_birth(const std::vector<Cluster>& clusters,
                                         const std::vector<TrackEstimate>& pmbm_est,
                                         const std::vector<TbdComponent>& existing,
                                         const MeasurementModel& mm, const TbdConfig& cfg,
                                         const FrameGeometry& g, long* next_label, long k) {
  std::vector<TbdComponent> born;
  const double g2 = cfg.gate_sigma * cfg.gate_sigma;
  auto near_component = [&](const TbdComponent& c, const PolarPoint& z) {
    if (std::hypot(c.density.mean(0), c.density.mean(2)) <= 0) return false;
    const Eigen::Vector2d nu = polar_innovation(z, c.density.mean);
    const Eigen::Matrix2d S = innovation_covariance(c.density, mm);
    return nu.dot(S.ldlt().solve(nu)) <= g2;
  };
  for (const auto& cl : clusters) {
    const Eigen::Vector2d p = polar_to_cartesian(cl.centroid);
    bool skip = false;
    for (const auto& e : pmbm_est)
      if (std::hypot(e.mean(0) - p(0), e.mean(2) - p(1)) < cfg.epsilon_pmbm) skip = true;
    for (const auto& c : existing)
      if (!skip && near_component(c, cl.centroid)) skip = true;
    for (const auto& c : born)
      if (!skip && near_component(c, cl.centroid)) skip = true;
    if (skip) continue;

    TbdComponent c;
    c.density.mean << p(0), 0.0, p(1), 0.0;
    const double s_rad = cfg.birth_pos_std_cells * g.range_res;
    const double s_tan = cfg.birth_pos_std_cells * g.azimuth_res * cl.centroid.range;
    const double th = cl.centroid.azimuth;
    Eigen::Matrix2d rot;
    rot << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    const Eigen::Matrix2d pc =
        rot * Eigen::Vector2d(s_rad * s_rad, s_tan * s_tan).asDiagonal() * rot.transpose();
    c.density.cov.setZero();
    c.density.cov(0, 0) = pc(0, 0);
    c.density.cov(0, 2) = pc(0, 1);
    c.density.cov(2, 0) = pc(1, 0);
    c.density.cov(2, 2) = pc(1, 1);
    c.density.cov(1, 1) = c.density.cov(3, 3) = cfg.birth_vel_std * cfg.birth_vel_std;
    c.r = cfg.p_b;
    c.alpha = cfg.alpha0;
    c.beta = cfg.beta0;
    c.gamma_ne = cfg.gamma0;
    c.lambda_hat = cfg.alpha0 / cfg.beta0;
    c.label = (*next_label)++;
    c.birth_time = k;
    c.age = 0;
    born.push_back(c);
  }
  return born;
}

void yield_to_pmbm(std::vector<TbdComponent>& comps, const std::vector<TrackEstimate>& pmbm,
                   const TbdConfig& cfg) {
  if (cfg.yield_frames <= 0) return;
  std::vector<TbdComponent> kept;
  for (auto& c : comps) {
    bool near = false;
    for (const auto& e : pmbm)
      if (std::hypot(e.mean(0) - c.density.mean(0), e.mean(2) - c.density.mean(2)) < cfg.epsilon_pmbm)
        near = true;
    c.pmbm_overlap = near ? c.pmbm_overlap + 1 : 0;
    if (c.pmbm_overlap < cfg.yield_frames) kept.push_back(c);
  }
  comps = std::move(kept);
}

std::vector<TrackEstimate> tbd_manage(std::vector<TbdComponent>& comps, const TbdConfig& cfg) {
  std::vector<TbdComponent> kept;
  for (auto& c : comps) {
    if (c.r > cfg.t_c) c.confirmed = true;
    if (c.r < cfg.t_d) continue;
    kept.push_back(c);
  }
  comps = std::move(kept);
  std::vector<TrackEstimate> out;
  for (const auto& c : comps)
    if (c.confirmed) out.push_back({c.label, c.density.mean, c.r});
  std::sort(out.begin(), out.end(),
            [](const TrackEstimate& a, const TrackEstimate& b) { return a.label < b.label; });
  return out;
}

}  // namespace hytrack
