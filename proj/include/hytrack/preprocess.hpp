#pragma once

#include <cstdint>
#include <vector>

#include "hytrack/frame.hpp"

namespace hytrack {

struct Background {
  FrameGeometry geom;
  std::vector<double> b;
};

struct LandMask {
  FrameGeometry geom;
  std::vector<std::uint8_t> cells;
  int dilation_range_cells = 0;
  int dilation_azimuth_cells = 0;

  bool masked(int ir, int ia) const { return cells[geom.index(ir, ia)] != 0; }
  std::size_t count() const;
};

Background compute_background(const std::vector<RadarFrame>& frames);

// Threshold b > tau then rectangular dilation.
LandMask build_land_mask(const Background& bg, double tau, int dil_r, int dil_a);

// Default tau: upper percentile of raw training intensities over cells whose
// background does not exceed the median background (the sea half).
double default_land_threshold(const std::vector<RadarFrame>& frames, const Background& bg,
                              double percentile = 99.5);

RadarFrame apply_mask(const RadarFrame& f, const LandMask& m);

void save_mask(const LandMask& m, const std::string& stem);
LandMask load_mask(const std::string& stem);

// Linear-interpolated percentile (0..100) of a sample; the input is reordered.
double percentile(std::vector<double>& v, double pct);

}  // namespace hytrack
