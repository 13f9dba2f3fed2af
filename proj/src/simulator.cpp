#include "hytrack/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "hytrack/errors.hpp"

namespace hytrack {

StreamRng::StreamRng(std::uint64_t seed, std::uint64_t stream, long k, std::uint64_t entity) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(entity),
                    static_cast<std::uint32_t>(entity >> 32)};
  eng_.seed(seq);
}

// std distributions are implementation-defined, so the transforms are spelled out.
double StreamRng::uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

double StreamRng::exponential() { return -std::log1p(-uniform()); }

double StreamRng::normal() {
  if (spare_) {
    const double v = *spare_;
    spare_.reset();
    return v;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double rad = std::sqrt(-2.0 * std::log(u1));
  spare_ = rad * std::sin(kTwoPi * u2);
  return rad * std::cos(kTwoPi * u2);
}

double StreamRng::gamma(double shape) {
  if (!(shape > 0)) throw InvalidInput("gamma variate: shape must be positive");
  if (shape < 1) {
    double u = uniform();
    while (u <= 0.0) u = uniform();
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  // Marsaglia-Tsang
  const double d = shape - 1.0 / 3.0, c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0 && std::log(u) < 0.5 * x * x + d * (1 - v + std::log(v))) return d * v;
  }
}

FrameGeometry default_geometry(int n_range, int n_azimuth) {
  FrameGeometry g;
  g.n_range = n_range;
  g.n_azimuth = n_azimuth;
  g.range_res = 25.0;
  g.range_offset = 500.0;
  g.azimuth_res = 0.5 * kPi / 180.0;
  g.azimuth_offset = -0.5 * n_azimuth * g.azimuth_res;
  return g;
}

namespace {

TargetSpec cv_target(long id, double x, double y, double vx, double vy, double snr_db, bool fluct) {
  TargetSpec t;
  t.id = id;
  t.position = {x, y};
  t.velocity = {vx, vy};
  t.snr_db = snr_db;
  t.fluctuating = fluct;
  return t;
}

}  // namespace

std::vector<std::string> bundled_scenario_names() { return {"demo", "weak_ramp", "five_targets", "throughput"}; }

ScenarioConfig bundled_scenario(const std::string& name, std::uint64_t seed) {
  ScenarioConfig c;
  c.geom = default_geometry();
  c.seed = seed;
  c.clutter_lambda0 = 0.1 * c.geom.size();
  if (name == "demo") {
    c.K = 80;
    c.targets.push_back(cv_target(1, 2000, -800, 4, 3, 18, false));
    c.targets.push_back(cv_target(2, 3000, 1800, -3, 2, 18, false));
    c.targets.push_back(cv_target(3, 4500, -400, -3, 2, 9, true));
  } else if (name == "weak_ramp") {
    c.K = 200;
    c.targets.push_back(cv_target(1, 2500, -1500, 3, 2, 18, false));
    TargetSpec w = cv_target(2, 3800, 900, -2, 3, 6, true);
    w.snr_db_end = 12.0;
    c.targets.push_back(w);
  } else if (name == "five_targets") {
    c.K = 130;
    c.targets.push_back(cv_target(1, 1800, -1200, 3, 1, 18, false));
    c.targets.push_back(cv_target(2, 2600, 1400, -2, -2, 18, false));
    c.targets.push_back(cv_target(3, 3800, -300, 0, 3, 18, false));
    c.targets.push_back(cv_target(4, 4800, 2200, -3, 0, 18, false));
    c.targets.push_back(cv_target(5, 5200, -2600, -2, 2, 18, false));
  } else if (name == "throughput") {
    c.geom = default_geometry(512, 512);
    c.clutter_lambda0 = 0.1 * c.geom.size();
    c.K = 12;
    for (int i = 0; i < 8; ++i) {
      const double r = 2500 + 1200 * i, az = -0.9 + 0.25 * i;
      c.targets.push_back(cv_target(i + 1, r * std::cos(az), r * std::sin(az), 2, -2, 16, false));
    }
  } else {
    throw InvalidInput("unknown bundled scenario '" + name + "'");
  }
  return c;
}

void ScenarioConfig::validate() const {
  geom.validate();
  if (K < 1) throw ConfigError("scenario: K must be >= 1");
  if (!(T > 0)) throw ConfigError("scenario: T must be positive");
  if (!(clutter_lambda0 >= 0)) throw ConfigError("scenario: clutter rate must be >= 0");
  if (!(clutter_shape >= 0)) throw ConfigError("scenario: clutter shape must be >= 0");
  if (!(psf.sigma_r > 0 && psf.sigma_theta > 0)) throw ConfigError("scenario: point spread must be positive");
  for (const auto& t : targets) {
    if (t.birth_k < 0 || t.birth_k >= K) throw ConfigError("scenario: target " + std::to_string(t.id) + " birth outside run");
    if (t.death_k >= 0 && t.death_k < t.birth_k)
      throw ConfigError("scenario: target " + std::to_string(t.id) + " dies before birth");
    if (t.rate && !(*t.rate >= 0)) throw ConfigError("scenario: negative target rate");
    if (!t.waypoints.empty() && !(t.speed >= 0)) throw ConfigError("scenario: negative speed");
  }
  for (const auto& poly : land)
    if (poly.size() < 3) throw ConfigError("scenario: land polygon needs >= 3 vertices");
}

namespace {

long last_frame(const ScenarioConfig& cfg, const TargetSpec& t) {
  return t.death_k < 0 ? cfg.K - 1 : std::min(t.death_k, cfg.K - 1);
}

StateVec target_state(const TargetSpec& t, double tau) {
  StateVec x;
  if (t.waypoints.empty()) {
    x << t.position(0) + t.velocity(0) * tau, t.velocity(0), t.position(1) + t.velocity(1) * tau,
        t.velocity(1);
    return x;
  }
  double remaining = t.speed * tau;
  for (std::size_t i = 0; i + 1 < t.waypoints.size(); ++i) {
    const Eigen::Vector2d seg = t.waypoints[i + 1] - t.waypoints[i];
    const double len = seg.norm();
    if (len <= 0) continue;
    const Eigen::Vector2d dir = seg / len;
    if (remaining <= len) {
      const Eigen::Vector2d p = t.waypoints[i] + remaining * dir;
      x << p(0), t.speed * dir(0), p(1), t.speed * dir(1);
      return x;
    }
    remaining -= len;
  }
  const Eigen::Vector2d p = t.waypoints.back();
  x << p(0), 0.0, p(1), 0.0;
  return x;
}

bool inside(const std::vector<Eigen::Vector2d>& poly, const Eigen::Vector2d& p) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a(1) > p(1)) != (b(1) > p(1)) && p(0) < (b(0) - a(0)) * (p(1) - a(1)) / (b(1) - a(1)) + a(0))
      in = !in;
  }
  return in;
}

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Mass of N(0, s^2) over [a, b].
double interval_mass(double a, double b, double s) {
  if (a >= 0) return 0.5 * (std::erfc(a / s / std::sqrt(2.0)) - std::erfc(b / s / std::sqrt(2.0)));
  return norm_cdf(b / s) - norm_cdf(a / s);
}

}  // namespace

std::vector<Eigen::Vector2d> ScenarioTruth::positions(long k) const {
  std::vector<Eigen::Vector2d> out;
  if (k < 0 || k >= static_cast<long>(alive.size())) return out;
  for (std::size_t m = 0; m < alive[k].size(); ++m)
    if (alive[k][m]) out.emplace_back(states[k][m](0), states[k][m](2));
  return out;
}

ScenarioTruth generate_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  ScenarioTruth truth;
  truth.T = cfg.T;
  const std::size_t M = cfg.targets.size();
  truth.alive.assign(cfg.K, std::vector<char>(M, 0));
  truth.states.assign(cfg.K, std::vector<StateVec>(M, StateVec::Zero()));
  for (std::size_t m = 0; m < M; ++m) {
    const TargetSpec& t = cfg.targets[m];
    GroundTruthTrack tr;
    tr.id = t.id;
    for (long k = t.birth_k; k <= last_frame(cfg, t); ++k) {
      const StateVec x = target_state(t, (k - t.birth_k) * cfg.T);
      const PolarPoint pp = cartesian_to_polar(x(0), x(2));
      if (!cfg.geom.contains(pp)) {
        std::ostringstream os;
        os << "scenario: target " << t.id << " leaves the field of view at frame " << k;
        throw ConfigError(os.str());
      }
      truth.alive[k][m] = 1;
      truth.states[k][m] = x;
      tr.samples.push_back({k * cfg.T, x(0), x(2)});
    }
    truth.tracks.push_back(tr);
    truth.ids.push_back(t.id);
  }
  return truth;
}

std::vector<double> clutter_mean_field(const ScenarioConfig& cfg) {
  const FrameGeometry& g = cfg.geom;
  const double r0 = cfg.r0();
  std::vector<double> prof(g.n_range);
  double sum = 0.0;
  for (int ir = 0; ir < g.n_range; ++ir) {
    const double a = g.range_edge(ir) - g.range_offset;
    prof[ir] = -std::exp(-a / r0) * std::expm1(-g.range_res / r0);
    sum += prof[ir];
  }
  std::vector<double> out(g.size());
  for (int ir = 0; ir < g.n_range; ++ir)
    for (int ia = 0; ia < g.n_azimuth; ++ia)
      out[g.index(ir, ia)] = cfg.clutter_lambda0 * prof[ir] / sum / g.n_azimuth;
  return out;
}

namespace {

// Mass of the cell centred on the point spread.
double centre_mass(const ScenarioConfig& cfg) {
  const double hr = 0.5 * cfg.geom.range_res, ha = 0.5 * cfg.geom.azimuth_res;
  return interval_mass(-hr, hr, cfg.psf.sigma_r) * interval_mass(-ha, ha, cfg.psf.sigma_theta);
}

}  // namespace

double target_rate(const ScenarioConfig& cfg, const TargetSpec& t, long k, const Eigen::Vector2d& p,
                   const std::vector<double>& clutter_mean) {
  if (t.rate) return *t.rate;
  double db = t.snr_db;
  if (t.snr_db_end) {
    const long last = last_frame(cfg, t);
    const double u = last > t.birth_k ? double(k - t.birth_k) / double(last - t.birth_k) : 0.0;
    db = t.snr_db + u * (*t.snr_db_end - t.snr_db);
  }
  const FrameGeometry& g = cfg.geom;
  const PolarPoint pp = cartesian_to_polar(p(0), p(1));
  const int ir = std::clamp(static_cast<int>(std::floor(g.range_coord(pp.range))), 0, g.n_range - 1);
  const int ia = std::clamp(static_cast<int>(std::floor(g.azimuth_coord(pp.azimuth))), 0, g.n_azimuth - 1);
  double c = clutter_mean[g.index(ir, ia)];
  if (!(c > 0)) c = 1.0;  // no clutter: SNR relative to unit intensity
  return std::pow(10.0, db / 10.0) * c / centre_mass(cfg);
}

std::vector<std::uint8_t> land_cells(const ScenarioConfig& cfg) {
  const FrameGeometry& g = cfg.geom;
  std::vector<std::uint8_t> out(g.size(), 0);
  if (cfg.land.empty()) return out;
  for (int ir = 0; ir < g.n_range; ++ir)
    for (int ia = 0; ia < g.n_azimuth; ++ia) {
      const Eigen::Vector2d p = polar_to_cartesian({g.range_center(ir), g.azimuth_center(ia)});
      for (const auto& poly : cfg.land)
        if (inside(poly, p)) {
          out[g.index(ir, ia)] = 1;
          break;
        }
    }
  return out;
}

RadarFrame render_frame(const ScenarioConfig& cfg, const ScenarioTruth& truth, long k,
                        const RenderOptions& opt) {
  if (k < 0 || k >= cfg.K) throw InvalidInput("render_frame: frame index outside scenario");
  const FrameGeometry& g = cfg.geom;
  RadarFrame f = make_frame(g, k);
  const std::vector<double> cm = clutter_mean_field(cfg);
  std::vector<double> acc(g.size(), 0.0);

  if (opt.clutter && cfg.clutter_lambda0 > 0) {
    StreamRng rng(cfg.seed, opt.stream, k, 0);
    for (std::size_t i = 0; i < acc.size(); ++i) {
      double texture = 1.0;
      if (cfg.clutter_shape > 0) texture = rng.gamma(cfg.clutter_shape) / cfg.clutter_shape;
      acc[i] = cm[i] * texture * rng.exponential();
    }
  }

  if (opt.targets) {
    for (std::size_t m = 0; m < cfg.targets.size(); ++m) {
      if (!truth.alive[k][m]) continue;
      const TargetSpec& t = cfg.targets[m];
      const StateVec& x = truth.states[k][m];
      const Eigen::Vector2d p(x(0), x(2));
      double lam = target_rate(cfg, t, k, p, cm);
      if (opt.fading && t.fluctuating) {
        StreamRng rng(cfg.seed, opt.stream, k, 100 + m);
        lam *= rng.exponential();
      }
      const PolarPoint pp = cartesian_to_polar(p(0), p(1));
      const double sr = cfg.psf.sigma_r, sa = cfg.psf.sigma_theta;
      const double fa = g.azimuth_coord(pp.azimuth);
      const int span_r = static_cast<int>(std::ceil(8 * sr / g.range_res)) + 1;
      const int span_a = static_cast<int>(std::ceil(8 * sa / g.azimuth_res)) + 1;
      const int cr = static_cast<int>(std::floor(g.range_coord(pp.range)));
      const int ca = static_cast<int>(std::floor(fa));
      std::vector<double> pa(2 * span_a + 1);
      for (int j = -span_a; j <= span_a; ++j) {
        const int ia = ca + j;
        pa[j + span_a] = interval_mass((ia - fa) * g.azimuth_res, (ia + 1 - fa) * g.azimuth_res, sa);
      }
      for (int ir = std::max(0, cr - span_r); ir <= std::min(g.n_range - 1, cr + span_r); ++ir) {
        const double mr = interval_mass(g.range_edge(ir) - pp.range, g.range_edge(ir + 1) - pp.range, sr);
        for (int j = -span_a; j <= span_a; ++j) {
          int ia = ca + j;
          if (g.full_circle()) ia = ((ia % g.n_azimuth) + g.n_azimuth) % g.n_azimuth;
          else if (ia < 0 || ia >= g.n_azimuth) continue;
          acc[g.index(ir, ia)] += lam * mr * pa[j + span_a];
        }
      }
    }
  }

  if (opt.land && !cfg.land.empty()) {
    const auto lc = land_cells(cfg);
    StreamRng rng(cfg.seed, opt.stream, k, 1);
    for (std::size_t i = 0; i < acc.size(); ++i) {
      if (!lc[i]) continue;
      acc[i] = std::max(0.0, cfg.land_level + cfg.land_noise * rng.normal());
    }
  }

  for (std::size_t i = 0; i < acc.size(); ++i) f.z[i] = static_cast<float>(acc[i]);
  return f;
}

void write_truth_csv(const ScenarioTruth& truth, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  os << "id,t,px,py\n" << std::setprecision(17);
  for (const auto& tr : truth.tracks)
    for (const auto& s : tr.samples) os << tr.id << ',' << s.t << ',' << s.px << ',' << s.py << '\n';
  if (!os) throw IoError("write failed: " + path);
}

std::vector<GroundTruthTrack> read_truth_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path);
  std::string line;
  std::getline(is, line);
  if (line.rfind("id,t,px,py", 0) != 0) throw IoError(path + ": unexpected truth header");
  std::map<long, GroundTruthTrack> by_id;
  std::vector<long> order;
  long lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[4];
    for (auto& s : f)
      if (!std::getline(ss, s, ',')) throw IoError(path + ": short row at line " + std::to_string(lineno));
    try {
      const long id = std::stol(f[0]);
      if (!by_id.count(id)) order.push_back(id);
      auto& tr = by_id[id];
      tr.id = id;
      tr.samples.push_back({std::stod(f[1]), std::stod(f[2]), std::stod(f[3])});
    } catch (const std::logic_error&) {
      throw IoError(path + ": bad number at line " + std::to_string(lineno));
    }
  }
  std::vector<GroundTruthTrack> out;
  for (long id : order) {
    by_id[id].validate();
    out.push_back(by_id[id]);
  }
  return out;
}

}  // namespace hytrack
