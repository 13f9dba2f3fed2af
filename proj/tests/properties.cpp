#include "properties.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "gen.hpp"
#include "hytrack/preprocess.hpp"

using namespace hytrack;

namespace props {

namespace {

FrameGeometry random_geometry(testgen::Gen& g) {
  FrameGeometry geo;
  geo.n_range = g.integer(1, 24);
  geo.n_azimuth = g.integer(1, 24);
  geo.range_res = g.uniform(1, 50);
  geo.range_offset = g.uniform(0, 1000);
  // Sometimes a full circle so azimuth wrap-around is exercised.
  geo.azimuth_res = g.coin(0.3) ? kTwoPi / geo.n_azimuth : g.uniform(1e-3, kTwoPi / geo.n_azimuth);
  geo.azimuth_offset = g.uniform(-kPi, kPi);
  return geo;
}

RadarFrame random_frame(testgen::Gen& g, const FrameGeometry& geo) {
  RadarFrame f = make_frame(geo);
  const int style = g.integer(0, 2);
  for (auto& v : f.z) {
    if (style == 0)
      v = static_cast<float>(g.uniform(0, 10));
    else if (style == 1)
      v = static_cast<float>(g.integer(0, 3));  // many ties
    else
      v = static_cast<float>(-std::log1p(-g.uniform()) * g.log_uniform(1e-3, 1e3));
  }
  return f;
}

LandMask random_mask(testgen::Gen& g, const FrameGeometry& geo) {
  Background bg;
  bg.geom = geo;
  bg.b.resize(geo.size());
  const double density = g.uniform();
  for (auto& v : bg.b) v = g.coin(density) ? 10.0 : 0.0;
  return build_land_mask(bg, 5.0, g.integer(0, 3), g.integer(0, 3));
}

void note(std::string* out, int fails, const std::string& msg) {
  if (out && fails == 1) *out = msg;
}

}  // namespace

int mask_idempotence(std::uint64_t seed, int cases, std::string* first_failure) {
  testgen::Gen g(seed);
  int fails = 0;
  for (int t = 0; t < cases; ++t) {
    const FrameGeometry geo = random_geometry(g);
    const RadarFrame f = random_frame(g, geo);
    const LandMask m = random_mask(g, geo);
    const RadarFrame once = apply_mask(f, m);
    const RadarFrame twice = apply_mask(once, m);
    bool ok = once.z == twice.z;
    for (std::size_t i = 0; i < f.z.size() && ok; ++i)
      ok = m.cells[i] ? once.z[i] == 0.0f : once.z[i] == f.z[i];
    if (!ok) {
      ++fails;
      std::ostringstream os;
      os << "case " << t << " (" << geo.n_range << "x" << geo.n_azimuth << ")";
      note(first_failure, fails, os.str());
    }
  }
  return fails;
}

int median_permutation_invariance(std::uint64_t seed, int cases, std::string* first_failure) {
  testgen::Gen g(seed);
  int fails = 0;
  for (int t = 0; t < cases; ++t) {
    const FrameGeometry geo = random_geometry(g);
    const int n = g.integer(1, 12);
    std::vector<RadarFrame> frames;
    for (int i = 0; i < n; ++i) frames.push_back(random_frame(g, geo));
    const Background a = compute_background(frames);
    std::vector<RadarFrame> shuffled = frames;
    g.shuffle(shuffled);
    const Background b = compute_background(shuffled);
    bool ok = a.b == b.b;
    // Independent check on one cell by full sort.
    const std::size_t cell = static_cast<std::size_t>(g.integer(0, static_cast<int>(geo.size()) - 1));
    std::vector<double> h;
    for (const auto& f : frames) h.push_back(f.z[cell]);
    std::sort(h.begin(), h.end());
    const double med = n % 2 ? h[n / 2] : 0.5 * (h[n / 2 - 1] + h[n / 2]);
    ok = ok && a.b[cell] == med;
    if (!ok) {
      ++fails;
      std::ostringstream os;
      os << "case " << t << " with " << n << " frames";
      note(first_failure, fails, os.str());
    }
  }
  return fails;
}

int dilation_monotonicity(std::uint64_t seed, int cases, std::string* first_failure) {
  testgen::Gen g(seed);
  int fails = 0;
  for (int t = 0; t < cases; ++t) {
    const FrameGeometry geo = random_geometry(g);
    Background bg;
    bg.geom = geo;
    bg.b.resize(geo.size());
    const double density = g.uniform(0, 0.3);
    for (auto& v : bg.b) v = g.coin(density) ? 10.0 : 0.0;
    const int r = g.integer(0, 3), a = g.integer(0, 3);
    const LandMask small = build_land_mask(bg, 5.0, r, a);
    const LandMask big = build_land_mask(bg, 5.0, r + g.integer(0, 2), a + g.integer(0, 2));
    bool ok = true;
    for (std::size_t i = 0; i < geo.size(); ++i)
      if (small.cells[i] && !big.cells[i]) ok = false;
    if (!ok) {
      ++fails;
      std::ostringstream os;
      os << "case " << t;
      note(first_failure, fails, os.str());
    }
  }
  return fails;
}

}  // namespace props
