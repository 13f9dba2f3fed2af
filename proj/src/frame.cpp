#include "hytrack/frame.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

#include "hytrack/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hytrack {

bool FrameGeometry::full_circle() const {
  return std::abs(n_azimuth * azimuth_res - kTwoPi) < 1e-9 * kTwoPi;
}

double FrameGeometry::azimuth_coord(double az) const {
  double d = az - azimuth_offset;
  if (full_circle()) {
    d = std::fmod(d, kTwoPi);
    if (d < 0) d += kTwoPi;
  } else {
    // Take the representative closest to the sector.
    const double mid = 0.5 * n_azimuth * azimuth_res;
    d = mid + wrap_angle(d - mid);
  }
  return d / azimuth_res;
}

PolarPoint FrameGeometry::cell_to_polar(double fr, double fa) const {
  return {range_offset + fr * range_res, wrap_angle(azimuth_offset + fa * azimuth_res)};
}

bool FrameGeometry::contains(const PolarPoint& p) const {
  const double fr = range_coord(p.range);
  const double fa = azimuth_coord(p.azimuth);
  return fr >= 0 && fr <= n_range && fa >= 0 && fa <= n_azimuth;
}

void FrameGeometry::validate() const {
  if (n_range < 1 || n_azimuth < 1) throw InvalidInput("frame geometry: empty grid");
  if (!(range_res > 0) || !(azimuth_res > 0))
    throw InvalidInput("frame geometry: resolutions must be positive");
  if (!(range_offset >= 0)) throw InvalidInput("frame geometry: negative range offset");
  if (n_azimuth * azimuth_res > kTwoPi * (1 + 1e-9))
    throw InvalidInput("frame geometry: azimuth extent exceeds 2*pi");
}

void RadarFrame::validate() const {
  geom.validate();
  if (z.size() != geom.size()) throw InvalidInput("radar frame: payload size mismatch");
  for (float v : z)
    if (!std::isfinite(v) || v < 0) throw InvalidInput("radar frame: intensities must be finite and >= 0");
}

RadarFrame make_frame(const FrameGeometry& g, long k, float fill) {
  g.validate();
  RadarFrame f;
  f.geom = g;
  f.k = k;
  f.z.assign(g.size(), fill);
  return f;
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "frame payloads are little-endian; big-endian hosts need byte swapping");

json geometry_json(const FrameGeometry& g) {
  json j;
  j["shape"] = {g.n_range, g.n_azimuth};
  j["range_res"] = g.range_res;
  j["azimuth_res"] = g.azimuth_res;
  j["range_offset"] = g.range_offset;
  j["azimuth_offset"] = g.azimuth_offset;
  return j;
}

FrameGeometry geometry_from_json(const json& j, const std::string& where) {
  try {
    FrameGeometry g;
    g.n_range = j.at("shape").at(0).get<int>();
    g.n_azimuth = j.at("shape").at(1).get<int>();
    g.range_res = j.at("range_res").get<double>();
    g.azimuth_res = j.at("azimuth_res").get<double>();
    g.range_offset = j.at("range_offset").get<double>();
    g.azimuth_offset = j.at("azimuth_offset").get<double>();
    g.validate();
    return g;
  } catch (const json::exception& e) {
    throw IoError(where + ": bad header: " + e.what());
  }
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

void write_raw(const std::string& path, const void* data, std::size_t bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) throw IoError("short write on " + path);
}

std::vector<char> read_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

void write_geometry_json(const FrameGeometry& g, const std::string& path) {
  write_text(path, geometry_json(g).dump(2) + "\n");
}

void write_frame(const RadarFrame& f, const std::string& stem) {
  if (f.z.size() != f.geom.size()) throw InvalidInput("write_frame: payload size mismatch");
  json j = geometry_json(f.geom);
  j["timestamp_index"] = f.k;
  j["dtype"] = "float32";
  j["order"] = "range-major";
  write_text(stem + ".json", j.dump(2) + "\n");
  write_raw(stem + ".bin", f.z.data(), f.z.size() * sizeof(float));
}

RadarFrame read_frame(const std::string& stem) {
  const json j = read_json(stem + ".json");
  RadarFrame f;
  f.geom = geometry_from_json(j, stem);
  if (j.value("dtype", std::string("float32")) != "float32")
    throw IoError(stem + ": unsupported dtype");
  f.k = j.value("timestamp_index", 0L);
  const auto raw = read_raw(stem + ".bin");
  if (raw.size() != f.geom.size() * sizeof(float))
    throw IoError(stem + ": payload has " + std::to_string(raw.size()) + " bytes, expected " +
                  std::to_string(f.geom.size() * sizeof(float)));
  f.z.resize(f.geom.size());
  std::memcpy(f.z.data(), raw.data(), raw.size());
  for (float v : f.z)
    if (!std::isfinite(v) || v < 0) throw IoError(stem + ": corrupt intensities");
  return f;
}

void write_bool_grid(const FrameGeometry& g, const std::vector<std::uint8_t>& cells,
                     const std::string& stem, int dil_r, int dil_a) {
  if (cells.size() != g.size()) throw InvalidInput("write_bool_grid: size mismatch");
  json j = geometry_json(g);
  j["dtype"] = "bool";
  j["order"] = "range-major";
  j["dilation_range_cells"] = dil_r;
  j["dilation_azimuth_cells"] = dil_a;
  write_text(stem + ".json", j.dump(2) + "\n");
  std::vector<std::uint8_t> norm(cells.size());
  std::transform(cells.begin(), cells.end(), norm.begin(), [](std::uint8_t c) { return c ? 1 : 0; });
  write_raw(stem + ".bin", norm.data(), norm.size());
}

std::vector<std::uint8_t> read_bool_grid(const std::string& stem, FrameGeometry* g,
                                         int* dil_r, int* dil_a) {
  const json j = read_json(stem + ".json");
  FrameGeometry geom = geometry_from_json(j, stem);
  if (j.value("dtype", std::string()) != "bool") throw IoError(stem + ": not a bool grid");
  const auto raw = read_raw(stem + ".bin");
  if (raw.size() != geom.size()) throw IoError(stem + ": payload size mismatch");
  std::vector<std::uint8_t> cells(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] != 0 && raw[i] != 1) throw IoError(stem + ": corrupt bool payload");
    cells[i] = static_cast<std::uint8_t>(raw[i]);
  }
  if (g) *g = geom;
  if (dil_r) *dil_r = j.value("dilation_range_cells", 0);
  if (dil_a) *dil_a = j.value("dilation_azimuth_cells", 0);
  return cells;
}

std::string frame_stem(const std::string& dir, long k) {
  std::ostringstream os;
  os << "frame_" << std::setw(6) << std::setfill('0') << k;
  return (fs::path(dir) / os.str()).string();
}

std::vector<std::string> list_frame_stems(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  std::vector<std::string> stems;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("frame_", 0) == 0 && e.path().extension() == ".json")
      stems.push_back((e.path().parent_path() / e.path().stem()).string());
  }
  std::sort(stems.begin(), stems.end());
  return stems;
}

}  // namespace hytrack
