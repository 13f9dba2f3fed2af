#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hytrack/geometry.hpp"

namespace hytrack {

struct FrameGeometry {
  int n_range = 0;
  int n_azimuth = 0;
  double range_res = 1.0;     // metres per cell
  double azimuth_res = 1.0;   // radians per cell
  double range_offset = 0.0;  // near edge of cell 0
  double azimuth_offset = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(n_range) * n_azimuth; }
  std::size_t index(int ir, int ia) const {
    return static_cast<std::size_t>(ir) * n_azimuth + ia;
  }
  double range_center(int ir) const { return range_offset + (ir + 0.5) * range_res; }
  double azimuth_center(int ia) const { return azimuth_offset + (ia + 0.5) * azimuth_res; }
  double range_edge(int ir) const { return range_offset + ir * range_res; }
  double azimuth_edge(int ia) const { return azimuth_offset + ia * azimuth_res; }
  double max_range() const { return range_offset + n_range * range_res; }
  bool full_circle() const;
  bool same_shape(const FrameGeometry& o) const {
    return n_range == o.n_range && n_azimuth == o.n_azimuth;
  }
  // Fractional cell coordinates of a polar point (cell centres at k + 0.5).
  double range_coord(double r) const { return (r - range_offset) / range_res; }
  double azimuth_coord(double az) const;
  PolarPoint cell_to_polar(double fr, double fa) const;
  bool contains(const PolarPoint& p) const;
  void validate() const;
};

struct RadarFrame {
  FrameGeometry geom;
  std::vector<float> z;  // range-major
  long k = 0;

  float at(int ir, int ia) const { return z[geom.index(ir, ia)]; }
  float& at(int ir, int ia) { return z[geom.index(ir, ia)]; }
  void validate() const;
};

RadarFrame make_frame(const FrameGeometry& g, long k = 0, float fill = 0.0f);

// Sidecar JSON + raw little-endian payload, one pair per grid.
void write_frame(const RadarFrame& f, const std::string& stem);
RadarFrame read_frame(const std::string& stem);

void write_bool_grid(const FrameGeometry& g, const std::vector<std::uint8_t>& cells,
                     const std::string& stem, int dil_r = 0, int dil_a = 0);
std::vector<std::uint8_t> read_bool_grid(const std::string& stem, FrameGeometry* g,
                                         int* dil_r = nullptr, int* dil_a = nullptr);

void write_geometry_json(const FrameGeometry& g, const std::string& path);

// Frame stems in a directory, sorted by name.
std::vector<std::string> list_frame_stems(const std::string& dir);
std::string frame_stem(const std::string& dir, long k);

}  // namespace hytrack
