#include "hytrack/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "hytrack/errors.hpp"

namespace hytrack {

std::size_t LandMask::count() const {
  return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), 1));
}

double percentile(std::vector<double>& v, double pct) {
  if (v.empty()) throw InvalidInput("percentile of empty sample");
  if (!(pct >= 0 && pct <= 100)) throw InvalidInput("percentile outside [0,100]");
  const double pos = pct / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  std::nth_element(v.begin(), v.begin() + static_cast<long>(lo), v.end());
  const double a = v[lo];
  if (frac == 0.0 || lo + 1 >= v.size()) return a;
  const double b = *std::min_element(v.begin() + static_cast<long>(lo) + 1, v.end());
  return a + frac * (b - a);
}

Background compute_background(const std::vector<RadarFrame>& frames) {
  if (frames.empty()) throw InvalidInput("compute_background: no frames");
  const FrameGeometry& g = frames.front().geom;
  for (const auto& f : frames) {
    if (!f.geom.same_shape(g) || f.z.size() != g.size())
      throw InvalidInput("compute_background: frame shape mismatch");
  }
  Background bg;
  bg.geom = g;
  bg.b.resize(g.size());
  const std::size_t n = frames.size();
  std::vector<double> hist(n);
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t t = 0; t < n; ++t) hist[t] = frames[t].z[i];
    const std::size_t mid = n / 2;
    std::nth_element(hist.begin(), hist.begin() + static_cast<long>(mid), hist.end());
    double m = hist[mid];
    if (n % 2 == 0) {
      const double lower = *std::max_element(hist.begin(), hist.begin() + static_cast<long>(mid));
      m = 0.5 * (lower + m);
    }
    bg.b[i] = m;
  }
  return bg;
}

LandMask build_land_mask(const Background& bg, double tau, int dil_r, int dil_a) {
  if (!std::isfinite(tau)) throw InvalidInput("build_land_mask: tau must be finite");
  if (dil_r < 0 || dil_a < 0) throw InvalidInput("build_land_mask: negative dilation");
  const FrameGeometry& g = bg.geom;
  if (bg.b.size() != g.size()) throw InvalidInput("build_land_mask: background size mismatch");

  std::vector<std::uint8_t> raw(g.size(), 0);
  for (std::size_t i = 0; i < g.size(); ++i) raw[i] = bg.b[i] > tau ? 1 : 0;

  // Separable rectangular dilation: azimuth pass then range pass.
  const bool wrap = g.full_circle();
  std::vector<std::uint8_t> tmp(g.size(), 0);
  for (int ir = 0; ir < g.n_range; ++ir) {
    for (int ia = 0; ia < g.n_azimuth; ++ia) {
      if (!raw[g.index(ir, ia)]) continue;
      for (int d = -dil_a; d <= dil_a; ++d) {
        int ja = ia + d;
        if (wrap) {
          ja %= g.n_azimuth;
          if (ja < 0) ja += g.n_azimuth;
        } else if (ja < 0 || ja >= g.n_azimuth) {
          continue;
        }
        tmp[g.index(ir, ja)] = 1;
      }
    }
  }
  LandMask m;
  m.geom = g;
  m.dilation_range_cells = dil_r;
  m.dilation_azimuth_cells = dil_a;
  m.cells.assign(g.size(), 0);
  for (int ir = 0; ir < g.n_range; ++ir) {
    for (int ia = 0; ia < g.n_azimuth; ++ia) {
      if (!tmp[g.index(ir, ia)]) continue;
      const int lo = std::max(0, ir - dil_r);
      const int hi = std::min(g.n_range - 1, ir + dil_r);
      for (int jr = lo; jr <= hi; ++jr) m.cells[g.index(jr, ia)] = 1;
    }
  }
  return m;
}

double default_land_threshold(const std::vector<RadarFrame>& frames, const Background& bg,
                              double pct) {
  if (frames.empty()) throw InvalidInput("default_land_threshold: no frames");
  std::vector<double> sorted_bg = bg.b;
  const double med = percentile(sorted_bg, 50.0);
  std::vector<double> sea;
  for (std::size_t i = 0; i < bg.b.size(); ++i) {
    if (bg.b[i] > med) continue;
    for (const auto& f : frames) sea.push_back(f.z[i]);
  }
  return percentile(sea, pct);
}

RadarFrame apply_mask(const RadarFrame& f, const LandMask& m) {
  if (!f.geom.same_shape(m.geom) || m.cells.size() != f.z.size())
    throw InvalidInput("apply_mask: mask shape does not match frame");
  RadarFrame out = f;
  for (std::size_t i = 0; i < out.z.size(); ++i)
    if (m.cells[i]) out.z[i] = 0.0f;
  return out;
}

void save_mask(const LandMask& m, const std::string& stem) {
  write_bool_grid(m.geom, m.cells, stem, m.dilation_range_cells, m.dilation_azimuth_cells);
}

LandMask load_mask(const std::string& stem) {
  LandMask m;
  m.cells = read_bool_grid(stem, &m.geom, &m.dilation_range_cells, &m.dilation_azimuth_cells);
  return m;
}

}  // namespace hytrack
