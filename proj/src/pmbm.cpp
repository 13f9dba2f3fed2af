#include "hytrack/pmbm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "hytrack/assignment.hpp"
#include "hytrack/errors.hpp"

namespace hytrack {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double logsumexp(const std::vector<double>& v) {
  if (v.empty()) return -kInf;
  const double m = *std::max_element(v.begin(), v.end());
  if (m == -kInf) return -kInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

void normalise(std::vector<GlobalHypothesis>& hyps) {
  double s = 0.0;
  for (const auto& h : hyps) s += h.weight;
  if (!(s > 0)) throw NumericalError("pmbm: hypothesis weights sum to zero");
  for (auto& h : hyps) h.weight /= s;
}

struct Gated {
  bool ok = false;
  double log_lik = 0.0;
  StateDensity post;
};

Gated gate_and_update(const StateDensity& d, const PolarPoint& z, const MeasurementModel& mm,
                      double gate) {
  Gated g;
  const EkfResult res = ekf_polar_update(d, z, mm);
  const double maha = res.innovation.dot(res.S.ldlt().solve(res.innovation));
  if (maha > gate) return g;
  g.ok = true;
  g.log_lik = res.log_likelihood;
  g.post = res.posterior;
  return g;
}

// Drops duplicate Bernoulli sets (weights added) and unreferenced pool entries.
PmbmPosterior compact(const PmbmPosterior& in) {
  PmbmPosterior out;
  out.poisson = in.poisson;
  out.next_label = in.next_label;
  out.k = in.k;
  out.hypotheses.clear();

  std::map<std::vector<int>, std::size_t> seen;
  std::vector<int> remap(in.bernoullis.size(), -1);
  for (const auto& h : in.hypotheses) {
    std::vector<int> key;
    for (const auto& a : h.assignments) key.push_back(a.first);
    std::sort(key.begin(), key.end());
    auto it = seen.find(key);
    if (it != seen.end()) {
      out.hypotheses[it->second].weight += h.weight;
      continue;
    }
    GlobalHypothesis nh;
    nh.weight = h.weight;
    for (const auto& [b, m] : h.assignments) {
      if (remap[b] < 0) {
        remap[b] = static_cast<int>(out.bernoullis.size());
        out.bernoullis.push_back(in.bernoullis[b]);
      }
      nh.assignments.emplace_back(remap[b], m);
    }
    std::sort(nh.assignments.begin(), nh.assignments.end());
    seen.emplace(key, out.hypotheses.size());
    out.hypotheses.push_back(std::move(nh));
  }
  if (out.hypotheses.empty()) out.hypotheses.push_back(GlobalHypothesis{});
  return out;
}

void cap_hypotheses(std::vector<GlobalHypothesis>& hyps, int n_max) {
  if (static_cast<int>(hyps.size()) <= n_max) return;
  std::vector<std::size_t> idx(hyps.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return hyps[a].weight > hyps[b].weight; });
  idx.resize(n_max);
  std::sort(idx.begin(), idx.end());
  std::vector<GlobalHypothesis> kept;
  for (std::size_t i : idx) kept.push_back(std::move(hyps[i]));
  hyps = std::move(kept);
}

}  // namespace

void PmbmConfig::validate() const {
  if (!(p_d > 0 && p_d < 1)) throw ConfigError("pmbm: p_d must lie in (0,1)");
  if (!(p_s >= 0 && p_s <= 1)) throw ConfigError("pmbm: p_s must lie in [0,1]");
  if (!(clutter_intensity > 0)) throw ConfigError("pmbm: clutter intensity must be positive");
  if (!(birth_weight >= 0)) throw ConfigError("pmbm: birth weight must be >= 0");
  if (!(gate > 0)) throw ConfigError("pmbm: gate must be positive");
  if (n_max < 1) throw ConfigError("pmbm: n_max must be >= 1");
  if (!(t_bp >= 0 && t_bp < 1) || !(t_pp >= 0) || !(t_e >= 0 && t_e < 1))
    throw ConfigError("pmbm: thresholds out of range");
  if (birth_grid_range < 1 || birth_grid_azimuth < 1) throw ConfigError("pmbm: empty birth grid");
  if (!(birth_region.r_max > birth_region.r_min) || !(birth_region.r_min >= 0) ||
      !(birth_region.az_max > birth_region.az_min))
    throw ConfigError("pmbm: invalid birth region");
}

double polar_clutter_intensity(const PolarPoint& z, const PmbmConfig& cfg) {
  return cfg.clutter_intensity * std::max(z.range, 1e-9);
}

PoissonIntensity birth_intensity(const PmbmConfig& cfg) {
  const BirthRegion& br = cfg.birth_region;
  const int nr = cfg.birth_grid_range, na = cfg.birth_grid_azimuth;
  const double dr = (br.r_max - br.r_min) / nr;
  const double da = (br.az_max - br.az_min) / na;
  PoissonIntensity out;
  double area_sum = 0.0;
  for (int i = 0; i < nr; ++i) {
    const double rc = br.r_min + (i + 0.5) * dr;
    for (int j = 0; j < na; ++j) {
      const double ac = br.az_min + (j + 0.5) * da;
      const double s_rad = 0.5 * dr;
      const double s_tan = 0.5 * rc * da;
      Eigen::Matrix2d rot;
      rot << std::cos(ac), -std::sin(ac), std::sin(ac), std::cos(ac);
      Eigen::Matrix2d c = rot * Eigen::Vector2d(s_rad * s_rad, s_tan * s_tan).asDiagonal() *
                          rot.transpose();
      PoissonComponent pc;
      pc.w = rc * dr * da;  // tile area, normalised below
      area_sum += pc.w;
      pc.density.mean << rc * std::cos(ac), 0.0, rc * std::sin(ac), 0.0;
      const double vv = cfg.birth_velocity_std * cfg.birth_velocity_std;
      pc.density.cov.setZero();
      pc.density.cov(0, 0) = c(0, 0);
      pc.density.cov(0, 2) = c(0, 1);
      pc.density.cov(2, 0) = c(1, 0);
      pc.density.cov(2, 2) = c(1, 1);
      pc.density.cov(1, 1) = vv;
      pc.density.cov(3, 3) = vv;
      out.push_back(pc);
    }
  }
  for (auto& pc : out) pc.w *= cfg.birth_weight / area_sum;
  if (cfg.birth_weight == 0) out.clear();
  return out;
}

PmbmPosterior pmbm_predict(const PmbmPosterior& post, const MotionModel& model,
                           const PmbmConfig& cfg) {
  PmbmPosterior out = post;
  out.k = post.k + 1;
  for (auto& b : out.bernoullis) {
    b.r *= cfg.p_s;
    b.density = cv_predict(b.density, model);
  }
  for (auto& pc : out.poisson) {
    pc.w *= cfg.p_s;
    pc.density = cv_predict(pc.density, model);
  }
  const auto births = birth_intensity(cfg);
  out.poisson.insert(out.poisson.end(), births.begin(), births.end());
  for (auto& h : out.hypotheses)
    for (auto& a : h.assignments) a.second = -1;
  return out;
}

PmbmPosterior pmbm_update(const PmbmPosterior& post, const std::vector<PolarPoint>& z,
                          const MeasurementModel& mm, const PmbmConfig& cfg) {
  const int m = static_cast<int>(z.size());
  const double pd = cfg.p_d;

  // New-target-or-clutter terms per measurement.
  std::vector<double> log_e(m);
  std::vector<BernoulliComponent> newborn(m);
  std::vector<char> has_newborn(m, 0);
  for (int k = 0; k < m; ++k) {
    std::vector<double> terms;
    std::vector<StateDensity> posts;
    for (const auto& pc : post.poisson) {
      const Gated g = gate_and_update(pc.density, z[k], mm, cfg.gate);
      if (!g.ok) continue;
      terms.push_back(std::log(pd * pc.w) + g.log_lik);
      posts.push_back(g.post);
    }
    const double log_p = logsumexp(terms);
    log_e[k] = logsumexp({std::log(polar_clutter_intensity(z[k], cfg)), log_p});
    if (terms.empty() || log_p == -kInf) continue;
    BernoulliComponent b;
    b.r = std::exp(log_p - log_e[k]);
    StateVec mean = StateVec::Zero();
    std::vector<double> wts(terms.size());
    for (std::size_t u = 0; u < terms.size(); ++u) {
      wts[u] = std::exp(terms[u] - log_p);
      mean += wts[u] * posts[u].mean;
    }
    StateCov cov = StateCov::Zero();
    for (std::size_t u = 0; u < terms.size(); ++u) {
      const StateVec d = posts[u].mean - mean;
      cov += wts[u] * (posts[u].cov + d * d.transpose());
    }
    b.density.mean = mean;
    b.density.cov = 0.5 * (cov + cov.transpose());
    b.birth_time = post.k;
    newborn[k] = b;
    has_newborn[k] = 1;
  }

  // Per pool Bernoulli: gated single-target updates.
  const int nb = static_cast<int>(post.bernoullis.size());
  std::vector<std::vector<Gated>> upd(nb);
  std::vector<char> referenced(nb, 0);
  for (const auto& h : post.hypotheses)
    for (const auto& a : h.assignments) referenced[a.first] = 1;
  for (int i = 0; i < nb; ++i) {
    if (!referenced[i]) continue;
    upd[i].resize(m);
    for (int k = 0; k < m; ++k) upd[i][k] = gate_and_update(post.bernoullis[i].density, z[k], mm, cfg.gate);
  }

  PmbmPosterior staged;
  staged.k = post.k;
  staged.hypotheses.clear();
  std::map<std::pair<int, int>, int> child_of;  // (parent or -1, meas or -1 / new meas)
  auto child = [&](int parent, int meas) {
    const auto key = std::make_pair(parent, meas);
    auto it = child_of.find(key);
    if (it != child_of.end()) return it->second;
    BernoulliComponent b;
    if (parent < 0) {
      b = newborn[meas];
    } else {
      const auto& p = post.bernoullis[parent];
      b = p;
      if (meas < 0) {
        b.r = p.r * (1 - pd) / (1 - p.r * pd);
      } else {
        b.r = 1.0;
        b.density = upd[parent][meas].post;
      }
    }
    const int idx = static_cast<int>(staged.bernoullis.size());
    staged.bernoullis.push_back(b);
    child_of.emplace(key, idx);
    return idx;
  };

  std::vector<double> log_w;
  for (const auto& h : post.hypotheses) {
    if (!(h.weight > 0)) continue;
    std::vector<int> bers;
    for (const auto& a : h.assignments) bers.push_back(a.first);
    const int n = static_cast<int>(bers.size());
    double base = std::log(h.weight);
    for (int b : bers) base += std::log(1 - post.bernoullis[b].r * pd);

    std::vector<int> row_of_meas(m, -1), rows, cols;
    std::vector<char> col_used(n, 0);
    for (int k = 0; k < m; ++k) {
      bool any = false;
      for (int i = 0; i < n; ++i)
        if (upd[bers[i]][k].ok && post.bernoullis[bers[i]].r > 0) {
          any = true;
          col_used[i] = 1;
        }
      if (any) {
        row_of_meas[k] = static_cast<int>(rows.size());
        rows.push_back(k);
      } else {
        base += log_e[k];
      }
    }
    for (int i = 0; i < n; ++i)
      if (col_used[i]) cols.push_back(i);

    const int R = static_cast<int>(rows.size());
    const int C = static_cast<int>(cols.size());
    Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(R, C + R, kInf);
    for (int rr = 0; rr < R; ++rr) {
      const int k = rows[rr];
      for (int cc = 0; cc < C; ++cc) {
        const auto& br = post.bernoullis[bers[cols[cc]]];
        const Gated& g = upd[bers[cols[cc]]][k];
        if (!g.ok || !(br.r > 0)) continue;
        cost(rr, cc) = -(std::log(br.r * pd) + g.log_lik - std::log(1 - br.r * pd));
      }
      cost(rr, C + rr) = -log_e[k];
    }
    const int kbest = std::max(1, static_cast<int>(std::ceil(cfg.n_max * h.weight - 1e-12)));
    const auto sols = murty_kbest(cost, kbest);
    for (const auto& sol : sols) {
      GlobalHypothesis nh;
      std::vector<int> meas_of_col(n, -1);
      for (int rr = 0; rr < R; ++rr) {
        const int c = sol.cols[rr];
        if (c < C) meas_of_col[cols[c]] = rows[rr];
      }
      for (int i = 0; i < n; ++i) nh.assignments.emplace_back(child(bers[i], meas_of_col[i]), meas_of_col[i]);
      for (int k = 0; k < m; ++k) {
        const bool to_new = row_of_meas[k] < 0 || sol.cols[row_of_meas[k]] >= C;
        if (to_new && has_newborn[k]) nh.assignments.emplace_back(child(-1, k), k);
      }
      std::sort(nh.assignments.begin(), nh.assignments.end());
      staged.hypotheses.push_back(std::move(nh));
      log_w.push_back(base - sol.cost);
    }
  }
  if (staged.hypotheses.empty()) throw NumericalError("pmbm_update: no hypothesis survived");
  const double lz = logsumexp(log_w);
  for (std::size_t j = 0; j < log_w.size(); ++j) staged.hypotheses[j].weight = std::exp(log_w[j] - lz);

  // Labels for newborn Bernoulli components in measurement order.
  long next = post.next_label;
  for (int k = 0; k < m; ++k) {
    auto it = child_of.find({-1, k});
    if (it != child_of.end()) staged.bernoullis[it->second].label = next++;
  }
  staged.next_label = next;

  staged.poisson = post.poisson;
  for (auto& pc : staged.poisson) pc.w *= (1 - pd);

  PmbmPosterior out = compact(staged);
  cap_hypotheses(out.hypotheses, cfg.n_max);
  normalise(out.hypotheses);
  return compact(out);
}

PmbmPosterior pmbm_prune(const PmbmPosterior& post, const PmbmConfig& cfg) {
  PmbmPosterior p = post;
  cap_hypotheses(p.hypotheses, cfg.n_max);
  for (auto& h : p.hypotheses) {
    std::vector<std::pair<int, int>> keep;
    for (const auto& a : h.assignments)
      if (!(p.bernoullis[a.first].r < cfg.t_bp)) keep.push_back(a);
    h.assignments = std::move(keep);
  }
  PmbmPosterior out = compact(p);
  normalise(out.hypotheses);
  PoissonIntensity kept;
  for (const auto& pc : out.poisson)
    if (!(pc.w < cfg.t_pp)) kept.push_back(pc);
  out.poisson = std::move(kept);
  return out;
}

std::vector<TrackEstimate> pmbm_estimate(const PmbmPosterior& post, const PmbmConfig& cfg) {
  std::vector<TrackEstimate> out;
  if (post.hypotheses.empty()) return out;
  std::size_t best = 0;
  for (std::size_t j = 1; j < post.hypotheses.size(); ++j)
    if (post.hypotheses[j].weight > post.hypotheses[best].weight) best = j;
  for (const auto& a : post.hypotheses[best].assignments) {
    const auto& b = post.bernoullis[a.first];
    if (b.r > cfg.t_e) out.push_back({b.label, b.density.mean, b.r});
  }
  std::sort(out.begin(), out.end(),
            [](const TrackEstimate& a, const TrackEstimate& b) { return a.label < b.label; });
  return out;
}

void validate_posterior(const PmbmPosterior& post, double tol) {
  double s = 0.0;
  for (const auto& h : post.hypotheses) {
    if (!(h.weight >= 0)) throw NumericalError("pmbm: negative hypothesis weight");
    s += h.weight;
    std::vector<int> meas, labels;
    for (const auto& [b, mi] : h.assignments) {
      if (b < 0 || b >= static_cast<int>(post.bernoullis.size()))
        throw NumericalError("pmbm: hypothesis references a missing Bernoulli");
      if (mi >= 0) meas.push_back(mi);
      labels.push_back(static_cast<int>(post.bernoullis[b].label));
    }
    std::sort(meas.begin(), meas.end());
    if (std::adjacent_find(meas.begin(), meas.end()) != meas.end())
      throw NumericalError("pmbm: measurement assigned twice in one hypothesis");
    std::sort(labels.begin(), labels.end());
    if (std::adjacent_find(labels.begin(), labels.end()) != labels.end())
      throw NumericalError("pmbm: duplicate label within a hypothesis");
  }
  if (std::abs(s - 1.0) > tol) {
    std::ostringstream os;
    os << "pmbm: hypothesis weights sum to " << s;
    throw NumericalError(os.str());
  }
  for (const auto& b : post.bernoullis)
    if (!(b.r >= 0 && b.r <= 1)) throw NumericalError("pmbm: existence probability outside [0,1]");
  for (const auto& pc : post.poisson)
    if (!(pc.w > 0)) throw NumericalError("pmbm: non-positive Poisson weight");
}

}  // namespace hytrack
