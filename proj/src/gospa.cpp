#include "hytrack/gospa.hpp"

#include <algorithm>
#include <cmath>

#include "hytrack/assignment.hpp"
#include "hytrack/errors.hpp"

namespace hytrack {

GospaResult gospa(const std::vector<Eigen::Vector2d>& truth, const std::vector<Eigen::Vector2d>& est,
                  const GospaParams& prm) {
  if (!(prm.c > 0) || !(prm.p >= 1)) throw InvalidInput("gospa: need c > 0 and p >= 1");
  if (prm.alpha != 2.0) throw InvalidInput("gospa: decomposition requires alpha = 2");
  const double cp = std::pow(prm.c, prm.p);
  const int n = static_cast<int>(truth.size()), m = static_cast<int>(est.size());
  GospaResult res;
  std::vector<int> cols(n, -1);
  if (n > 0 && m > 0) {
    Eigen::MatrixXd cost(n, m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) cost(i, j) = std::pow(std::min((truth[i] - est[j]).norm(), prm.c), prm.p);
    cols = solve_assignment(cost)->cols;
  }
  int matched = 0;
  for (int i = 0; i < n; ++i) {
    const int j = cols[i];
    if (j < 0) continue;
    const double d = (truth[i] - est[j]).norm();
    // A pair at the cut-off costs the same as a miss plus a false target.
    if (d >= prm.c) continue;
    res.loc_sq += std::pow(d, prm.p);
    ++matched;
  }
  res.missed_count = n - matched;
  res.false_count = m - matched;
  res.missed_sq = cp / prm.alpha * res.missed_count;
  res.false_sq = cp / prm.alpha * res.false_count;
  res.total = std::pow(res.loc_sq + res.missed_sq + res.false_sq, 1.0 / prm.p);
  return res;
}

void GroundTruthTrack::validate() const {
  for (std::size_t i = 1; i < samples.size(); ++i)
    if (!(samples[i].t > samples[i - 1].t))
      throw InvalidInput("ground truth: sample times must be strictly increasing (track " +
                         std::to_string(id) + ")");
}

std::optional<Eigen::Vector2d> interpolate_truth(const GroundTruthTrack& tr, double t) {
  const auto& s = tr.samples;
  if (s.empty() || t < s.front().t || t > s.back().t) return std::nullopt;
  auto it = std::lower_bound(s.begin(), s.end(), t,
                             [](const TruthSample& a, double v) { return a.t < v; });
  if (it->t == t) return Eigen::Vector2d(it->px, it->py);
  const auto& b = *it;
  const auto& a = *(it - 1);
  const double u = (t - a.t) / (b.t - a.t);
  return Eigen::Vector2d(a.px + u * (b.px - a.px), a.py + u * (b.py - a.py));
}

}  // namespace hytrack
