#include "hytrack/detect.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "hytrack/errors.hpp"

namespace hytrack {

namespace {

std::vector<double> gaussian_kernel(double sigma, int* radius) {
  const int rad = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * rad + 1);
  double sum = 0.0;
  for (int i = -rad; i <= rad; ++i) {
    k[i + rad] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + rad];
  }
  for (double& v : k) v /= sum;
  *radius = rad;
  return k;
}

// Index mapping at the borders: wrap or mirror (edge sample repeated).
inline int border(int i, int n, bool wrap) {
  if (wrap) {
    i %= n;
    return i < 0 ? i + n : i;
  }
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

void smooth(std::vector<double>& v, const FrameGeometry& g, const std::vector<double>& k,
            int rad, bool wrap_az) {
  const int nr = g.n_range, na = g.n_azimuth;
  std::vector<double> tmp(v.size());
  std::vector<double> line(std::max(nr, na) + 2 * rad);
  for (int ir = 0; ir < nr; ++ir) {
    const double* row = &v[g.index(ir, 0)];
    for (int j = -rad; j < na + rad; ++j) line[j + rad] = row[border(j, na, wrap_az)];
    double* out = &tmp[g.index(ir, 0)];
    for (int ia = 0; ia < na; ++ia) {
      double acc = 0.0;
      for (int t = 0; t <= 2 * rad; ++t) acc += k[t] * line[ia + t];
      out[ia] = acc;
    }
  }
  for (int ia = 0; ia < na; ++ia) {
    for (int j = -rad; j < nr + rad; ++j) line[j + rad] = tmp[g.index(border(j, nr, false), ia)];
    for (int ir = 0; ir < nr; ++ir) {
      double acc = 0.0;
      for (int t = 0; t <= 2 * rad; ++t) acc += k[t] * line[ir + t];
      v[g.index(ir, ia)] = acc;
    }
  }
}

void gradients(const std::vector<double>& z, const FrameGeometry& g, bool wrap_az,
               std::vector<double>& gr, std::vector<double>& ga) {
  const int nr = g.n_range, na = g.n_azimuth;
  gr.assign(z.size(), 0.0);
  ga.assign(z.size(), 0.0);
  for (int ir = 0; ir < nr; ++ir) {
    for (int ia = 0; ia < na; ++ia) {
      const std::size_t i = g.index(ir, ia);
      if (nr > 1) {
        if (ir == 0) gr[i] = z[g.index(1, ia)] - z[i];
        else if (ir == nr - 1) gr[i] = z[i] - z[g.index(nr - 2, ia)];
        else gr[i] = 0.5 * (z[g.index(ir + 1, ia)] - z[g.index(ir - 1, ia)]);
      }
      if (na > 1) {
        if (wrap_az) {
          ga[i] = 0.5 * (z[g.index(ir, (ia + 1) % na)] - z[g.index(ir, (ia + na - 1) % na)]);
        } else if (ia == 0) {
          ga[i] = z[g.index(ir, 1)] - z[i];
        } else if (ia == na - 1) {
          ga[i] = z[i] - z[g.index(ir, na - 2)];
        } else {
          ga[i] = 0.5 * (z[g.index(ir, ia + 1)] - z[g.index(ir, ia - 1)]);
        }
      }
    }
  }
}

}  // namespace

std::vector<double> sgbd_raw(const RadarFrame& f, double sigma_s, const LandMask* mask) {
  const FrameGeometry& g = f.geom;
  if (f.z.size() != g.size()) throw InvalidInput("sgbd: payload size mismatch");
  if (!(sigma_s > 0)) throw InvalidInput("sgbd: sigma_s must be positive");
  int rad = 0;
  const auto kern = gaussian_kernel(sigma_s, &rad);
  if (g.n_range < 2 * rad + 1 || g.n_azimuth < 2 * rad + 1)
    throw InvalidInput("sgbd: frame smaller than the smoothing kernel");
  if (mask && (!mask->geom.same_shape(g) || mask->cells.size() != g.size()))
    throw InvalidInput("sgbd: mask shape mismatch");

  std::vector<double> z(f.z.begin(), f.z.end());
  if (mask) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < z.size(); ++i)
      if (!mask->cells[i]) {
        sum += z[i];
        ++n;
      }
    const double fill = n ? sum / static_cast<double>(n) : 0.0;
    for (std::size_t i = 0; i < z.size(); ++i)
      if (mask->cells[i]) z[i] = fill;
  }

  const bool wrap = g.full_circle();
  std::vector<double> gr, ga;
  gradients(z, g, wrap, gr, ga);
  smooth(gr, g, kern, rad, wrap);
  smooth(ga, g, kern, rad, wrap);

  std::vector<double> dr, tmp, da;
  gradients(gr, g, wrap, dr, tmp);
  gradients(ga, g, wrap, tmp, da);
  std::vector<double> s(z.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = std::max(0.0, -(dr[i] + da[i]));
    if (mask && mask->cells[i]) s[i] = 0.0;
  }
  return s;
}

ScoreMap sgbd_score(const RadarFrame& f, const SgbdConfig& cfg, const LandMask* mask) {
  if (!(cfg.scale > 0)) throw InvalidInput("sgbd: scale must be positive");
  ScoreMap m;
  m.geom = f.geom;
  m.s = sgbd_raw(f, cfg.sigma_s, mask);
  for (double& v : m.s) v = std::min(1.0, v / cfg.scale);
  return m;
}

double calibrate_sgbd(const std::vector<RadarFrame>& frames, double sigma_s, double quantile,
                      double level, const LandMask* mask) {
  if (frames.empty()) throw InvalidInput("calibrate_sgbd: no calibration frames");
  if (!(quantile > 0 && quantile < 1) || !(level > 0 && level <= 1))
    throw InvalidInput("calibrate_sgbd: quantile and level must lie in (0,1)");
  std::vector<double> all;
  for (const auto& f : frames) {
    const auto s = sgbd_raw(f, sigma_s, mask);
    for (std::size_t i = 0; i < s.size(); ++i)
      if (!mask || !mask->cells[i]) all.push_back(s[i]);
  }
  const double q = percentile(all, 100.0 * quantile);
  if (!(q > 0)) throw NumericalError("calibrate_sgbd: calibration quantile is zero");
  return q / level;
}

DetectionGrid threshold_detect(const ScoreMap& scores, double tau) {
  if (!(tau >= 0 && tau <= 1)) throw InvalidInput("threshold_detect: tau outside [0,1]");
  DetectionGrid d(scores.s.size(), 0);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = scores.s[i] > tau ? 1 : 0;
  return d;
}

std::vector<Cluster> dbscan_cluster(const DetectionGrid& det, const ScoreMap& scores,
                                    const RadarFrame& frame, const DbscanConfig& cfg) {
  const FrameGeometry& g = frame.geom;
  if (!(cfg.eps_cells > 0) || cfg.min_points < 1)
    throw InvalidInput("dbscan: eps must be positive and min_points >= 1");
  if (det.size() != g.size() || scores.s.size() != g.size())
    throw InvalidInput("dbscan: grid size mismatch");
  const bool wrap = g.full_circle();
  const double eps2 = cfg.eps_cells * cfg.eps_cells;

  std::vector<int> id(g.size(), -1);
  std::vector<std::pair<int, int>> pts;
  for (int ir = 0; ir < g.n_range; ++ir)
    for (int ia = 0; ia < g.n_azimuth; ++ia)
      if (det[g.index(ir, ia)]) {
        id[g.index(ir, ia)] = static_cast<int>(pts.size());
        pts.emplace_back(ir, ia);
      }

  // Azimuth steps count as arc length in range-cell units at the mean range of the pair.
  auto az_weight = [&](int ir, int jr) {
    const double rm = 0.5 * (g.range_center(ir) + g.range_center(jr));
    return rm * g.azimuth_res / g.range_res;
  };
  const int rr = static_cast<int>(std::floor(cfg.eps_cells));
  auto neighbours = [&](int p, std::vector<int>& out) {
    out.clear();
    const auto [ir, ia] = pts[p];
    for (int jr = std::max(0, ir - rr); jr <= std::min(g.n_range - 1, ir + rr); ++jr) {
      const double dr = jr - ir;
      const double rem = eps2 - dr * dr;
      if (rem < 0) continue;
      const double w = az_weight(ir, jr);
      int span = w > 0 ? static_cast<int>(std::floor(std::sqrt(rem) / w)) : g.n_azimuth;
      span = std::min(span, wrap ? g.n_azimuth / 2 : g.n_azimuth);
      for (int d = -span; d <= span; ++d) {
        int ja = ia + d;
        if (wrap) {
          ja %= g.n_azimuth;
          if (ja < 0) ja += g.n_azimuth;
        } else if (ja < 0 || ja >= g.n_azimuth) {
          continue;
        }
        const int q = id[g.index(jr, ja)];
        if (q < 0) continue;
        const double da = d * w;
        if (dr * dr + da * da <= eps2) out.push_back(q);
      }
    }
  };

  const int n = static_cast<int>(pts.size());
  std::vector<int> label(n, -2);  // -2 unvisited, -1 noise
  std::vector<int> nb, nb2;
  int next = 0;
  for (int p = 0; p < n; ++p) {
    if (label[p] != -2) continue;
    neighbours(p, nb);
    if (static_cast<int>(nb.size()) < cfg.min_points) {
      label[p] = -1;
      continue;
    }
    const int c = next++;
    label[p] = c;
    std::deque<int> queue(nb.begin(), nb.end());
    while (!queue.empty()) {
      const int q = queue.front();
      queue.pop_front();
      if (label[q] == -1) label[q] = c;
      if (label[q] != -2) continue;
      label[q] = c;
      neighbours(q, nb2);
      if (static_cast<int>(nb2.size()) >= cfg.min_points)
        queue.insert(queue.end(), nb2.begin(), nb2.end());
    }
  }

  std::vector<Cluster> out(next);
  for (int p = 0; p < n; ++p)
    if (label[p] >= 0) out[label[p]].member_cells.push_back(pts[p]);

  for (auto& c : out) {
    c.cell_count = static_cast<int>(c.member_cells.size());
    const int ref_a = c.member_cells.front().second;
    double wsum = 0, sr = 0, sa = 0, usum_r = 0, usum_a = 0;
    for (const auto& [ir, ia] : c.member_cells) {
      const std::size_t i = g.index(ir, ia);
      c.peak_score = std::max(c.peak_score, scores.s[i]);
      double da = ia - ref_a;
      if (wrap) {
        if (da > g.n_azimuth / 2.0) da -= g.n_azimuth;
        if (da < -g.n_azimuth / 2.0) da += g.n_azimuth;
      }
      const double w = frame.z[i];
      wsum += w;
      sr += w * (ir + 0.5);
      sa += w * (ref_a + da + 0.5);
      usum_r += ir + 0.5;
      usum_a += ref_a + da + 0.5;
    }
    if (wsum > 0) {
      c.centroid_range_idx = sr / wsum;
      c.centroid_azimuth_idx = sa / wsum;
    } else {
      c.centroid_range_idx = usum_r / c.cell_count;
      c.centroid_azimuth_idx = usum_a / c.cell_count;
    }
    if (wrap) {
      c.centroid_azimuth_idx = std::fmod(c.centroid_azimuth_idx, g.n_azimuth);
      if (c.centroid_azimuth_idx < 0) c.centroid_azimuth_idx += g.n_azimuth;
    }
    c.centroid = g.cell_to_polar(c.centroid_range_idx, c.centroid_azimuth_idx);
  }
  sort_clusters(out);
  return out;
}

void sort_clusters(std::vector<Cluster>& clusters) {
  std::stable_sort(clusters.begin(), clusters.end(), [](const Cluster& a, const Cluster& b) {
    if (a.peak_score != b.peak_score) return a.peak_score > b.peak_score;
    const auto ca = std::make_pair(static_cast<long>(std::floor(a.centroid_range_idx)),
                                   static_cast<long>(std::floor(a.centroid_azimuth_idx)));
    const auto cb = std::make_pair(static_cast<long>(std::floor(b.centroid_range_idx)),
                                   static_cast<long>(std::floor(b.centroid_azimuth_idx)));
    return ca < cb;
  });
}

std::vector<PolarPoint> extract_point_detections(const std::vector<Cluster>& clusters) {
  std::vector<PolarPoint> out;
  out.reserve(clusters.size());
  for (const auto& c : clusters) out.push_back(c.centroid);
  return out;
}

}  // namespace hytrack
