#include "hytrack/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "hytrack/errors.hpp"
#include "json.hpp"

namespace hytrack {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t).count();
}

}  // namespace

BirthRegion birth_region_for(const FrameGeometry& g) {
  BirthRegion b;
  b.r_min = g.range_offset > 0 ? g.range_offset : 0.5 * g.range_res;
  b.r_max = g.max_range();
  b.az_min = g.azimuth_offset;
  b.az_max = g.azimuth_offset + g.n_azimuth * g.azimuth_res;
  return b;
}

HybridTracker::HybridTracker(const PipelineConfig& cfg, const FrameGeometry& geom,
                             std::optional<LandMask> mask)
    : cfg_(cfg), geom_(geom), mask_(std::move(mask)) {
  geom_.validate();
  if (!cfg_.birth_region_set) cfg_.pmbm.birth_region = birth_region_for(geom_);
  cfg_.pmbm.validate();
  cfg_.tbd.validate();
  if (mask_ && !mask_->geom.same_shape(geom_))
    throw InvalidInput("land mask shape does not match the frames");
  pmbm_motion_ = cfg_.motion;
  pmbm_motion_.p_s = cfg_.pmbm.p_s;
  tbd_motion_ = cfg_.motion;
  tbd_motion_.p_s = cfg_.tbd.p_s;
  const double r0 = cfg_.clutter_r0 > 0 ? cfg_.clutter_r0 : geom_.max_range() / 3.0;
  clutter_ = make_clutter_model(geom_, r0);
}

FrameResult HybridTracker::step(const RadarFrame& frame, ScoreMap* scores_out) {
  if (!frame.geom.same_shape(geom_)) {
    std::ostringstream os;
    os << "frame " << frame.k << ": shape does not match the tracker";
    throw InvalidInput(os.str());
  }
  FrameResult out;
  out.k = frame.k;
  const auto t_start = Clock::now();
  const LandMask* mask = mask_ ? &*mask_ : nullptr;

  auto t = Clock::now();
  const RadarFrame masked = mask ? apply_mask(frame, *mask) : frame;
  out.times.preprocess = ms_since(t);

  t = Clock::now();
  const ScoreMap scores = sgbd_score(masked, cfg_.detect.sgbd, mask);
  std::vector<Cluster> high, low;
  if (cfg_.enable_pmbm)
    high = dbscan_cluster(threshold_detect(scores, cfg_.detect.tau_high), scores, masked, cfg_.detect.dbscan);
  if (cfg_.enable_tbd)
    low = dbscan_cluster(threshold_detect(scores, cfg_.detect.tau_low), scores, masked, cfg_.detect.dbscan);
  out.clusters_high = static_cast<int>(high.size());
  out.clusters_low = static_cast<int>(low.size());
  if (scores_out) *scores_out = scores;
  out.times.detect = ms_since(t);

  t = Clock::now();
  if (cfg_.enable_pmbm) {
    const PmbmPosterior pred = pmbm_predict(pmbm_, pmbm_motion_, cfg_.pmbm);
    pmbm_ = pmbm_prune(pmbm_update(pred, extract_point_detections(high), cfg_.measurement, cfg_.pmbm), cfg_.pmbm);
    out.pmbm = pmbm_estimate(pmbm_, cfg_.pmbm);
  }
  out.times.pmbm = ms_since(t);

  t = Clock::now();
  std::vector<double> rates;
  if (cfg_.enable_tbd) {
    std::vector<TbdComponent> pred = tbd_predict(comps_, tbd_motion_, cfg_.tbd);
    std::vector<TrackEstimate> taken = out.pmbm;
    if (cfg_.birth_suppress_high && cfg_.enable_pmbm)
      for (const auto& c : high) {
        const Eigen::Vector2d p = polar_to_cartesian(c.centroid);
        TrackEstimate e;
        e.mean << p(0), 0.0, p(1), 0.0;
        taken.push_back(e);
      }
    const std::vector<TbdComponent> born =
        adaptive_birth(low, taken, pred, cfg_.measurement, cfg_.tbd, geom_, &next_tbd_label_, frame.k);
    for (const auto& b : tbd_predict(born, tbd_motion_, cfg_.tbd)) pred.push_back(b);
    EmTrace trace;
    em_update(pred, masked, clutter_, cfg_.measurement, cfg_.tbd, &trace, mask);
    tbd_existence_update(pred, cfg_.tbd);
    yield_to_pmbm(pred, out.pmbm, cfg_.tbd);
    out.tbd = tbd_manage(pred, cfg_.tbd);
    comps_ = std::move(pred);
    out.em_iterations = trace.iterations;
    out.tbd_components = static_cast<int>(comps_.size());
    for (const auto& e : out.tbd) {
      double lam = 0.0;
      for (const auto& c : comps_)
        if (c.label == e.label) lam = c.lambda_hat;
      rates.push_back(lam);
    }
  }
  out.times.tbd = ms_since(t);

  t = Clock::now();
  out.fused = fuse(out.pmbm, out.tbd, frame.k, &rates);
  out.warnings = proximity_warnings(out.fused, cfg_.tbd.epsilon_pmbm);
  out.times.fuse = ms_since(t);
  out.times.total = ms_since(t_start);
  first_ = false;
  return out;
}

RadarFrame crop_frame(const RadarFrame& f, const CropWindow& c) {
  if (!c.active()) return f;
  const FrameGeometry& g = f.geom;
  const int r0 = c.range_end >= 0 ? c.range_begin : 0;
  const int r1 = c.range_end >= 0 ? c.range_end : g.n_range;
  const int a0 = c.azimuth_end >= 0 ? c.azimuth_begin : 0;
  const int a1 = c.azimuth_end >= 0 ? c.azimuth_end : g.n_azimuth;
  if (r0 < 0 || a0 < 0 || r1 > g.n_range || a1 > g.n_azimuth || r1 <= r0 || a1 <= a0)
    throw InvalidInput("crop window outside the frame");
  FrameGeometry h = g;
  h.n_range = r1 - r0;
  h.n_azimuth = a1 - a0;
  h.range_offset = g.range_edge(r0);
  h.azimuth_offset = g.azimuth_edge(a0);
  RadarFrame out = make_frame(h, f.k);
  for (int ir = r0; ir < r1; ++ir)
    for (int ia = a0; ia < a1; ++ia) out.at(ir - r0, ia - a0) = f.at(ir, ia);
  return out;
}

LandMask crop_mask(const LandMask& m, const CropWindow& c) {
  RadarFrame tmp = make_frame(m.geom);
  for (std::size_t i = 0; i < m.cells.size(); ++i) tmp.z[i] = m.cells[i];
  const RadarFrame cr = crop_frame(tmp, c);
  LandMask out = m;
  out.geom = cr.geom;
  out.cells.assign(cr.z.size(), 0);
  for (std::size_t i = 0; i < cr.z.size(); ++i) out.cells[i] = cr.z[i] != 0.0f;
  return out;
}

double calibrate_scenario(const ScenarioConfig& sc, int n_frames, double sigma_s) {
  ScenarioConfig c = sc;
  c.K = std::max<long>(c.K, n_frames);
  ScenarioTruth none;
  RenderOptions opt;
  opt.targets = false;
  opt.land = false;
  opt.stream = 1;
  std::vector<RadarFrame> frames;
  for (int k = 0; k < n_frames; ++k) frames.push_back(render_frame(c, none, k, opt));
  return calibrate_sgbd(frames, sigma_s);
}

void write_calibration(const std::string& path, double scale, double sigma_s) {
  nlohmann::json j = {{"sgbd_scale", scale}, {"sigma_s", sigma_s}};
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  os << j.dump(2) << '\n';
}

double read_calibration(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path);
  try {
    const auto j = nlohmann::json::parse(is);
    const double s = j.at("sgbd_scale").get<double>();
    if (!(s > 0)) throw IoError(path + ": sgbd_scale must be positive");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
}

void write_tracks_header(std::ostream& os) { os << "k,label,px,py,vx,vy,r,lambda_hat,source\n"; }

void write_tracks_rows(std::ostream& os, const std::vector<FusedEstimate>& fused) {
  char buf[256];
  for (const auto& e : fused) {
    const auto& x = e.state;
    if (e.source == Source::TBD)
      std::snprintf(buf, sizeof buf, "%ld,%ld,%.3f,%.3f,%.4f,%.4f,%.9g,%.6g,%s\n", e.k, e.label, x(0), x(2),
                    x(1), x(3), e.existence, e.lambda_hat, source_name(e.source));
    else
      std::snprintf(buf, sizeof buf, "%ld,%ld,%.3f,%.3f,%.4f,%.4f,%.9g,,%s\n", e.k, e.label, x(0), x(2), x(1),
                    x(3), e.existence, source_name(e.source));
    os << buf;
  }
}

MetricsRow average_metrics(const std::vector<MetricsRow>& rows) {
  MetricsRow m;
  if (rows.empty()) return m;
  double n_truth = 0, n_est = 0;
  for (const auto& r : rows) {
    m.g.total += r.g.total;
    m.g.loc_sq += r.g.loc_sq;
    m.g.missed_sq += r.g.missed_sq;
    m.g.false_sq += r.g.false_sq;
    n_truth += r.n_truth;
    n_est += r.n_est;
  }
  const double n = static_cast<double>(rows.size());
  m.g.total /= n;
  m.g.loc_sq /= n;
  m.g.missed_sq /= n;
  m.g.false_sq /= n;
  m.n_truth = static_cast<int>(n_truth);  // sums; averaged when written
  m.n_est = static_cast<int>(n_est);
  return m;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  os << "k,total,loc_sq,missed_sq,false_sq,n_truth,n_est\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%ld,%.6f,%.6f,%.6f,%.6f,%d,%d\n", r.k, r.g.total, r.g.loc_sq, r.g.missed_sq,
                  r.g.false_sq, r.n_truth, r.n_est);
    os << buf;
  }
  if (!rows.empty()) {
    const MetricsRow m = average_metrics(rows);
    const double n = static_cast<double>(rows.size());
    std::snprintf(buf, sizeof buf, "mean,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", m.g.total, m.g.loc_sq, m.g.missed_sq,
                  m.g.false_sq, m.n_truth / n, m.n_est / n);
    os << buf;
  }
}

std::vector<Eigen::Vector2d> truth_positions(const std::vector<GroundTruthTrack>& truth, double t) {
  std::vector<Eigen::Vector2d> out;
  for (const auto& tr : truth)
    if (auto p = interpolate_truth(tr, t)) out.push_back(*p);
  return out;
}

std::vector<TrackRow> read_tracks_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path);
  std::string line;
  std::getline(is, line);
  if (line.rfind("k,label,px,py,vx,vy,r,lambda_hat,source", 0) != 0)
    throw IoError(path + ": unexpected tracks header");
  std::vector<TrackRow> rows;
  long lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 9) throw IoError(path + ": wrong field count at line " + std::to_string(lineno));
    try {
      TrackRow r;
      r.k = std::stol(f[0]);
      r.label = std::stol(f[1]);
      r.px = std::stod(f[2]);
      r.py = std::stod(f[3]);
      r.vx = std::stod(f[4]);
      r.vy = std::stod(f[5]);
      r.r = std::stod(f[6]);
      r.lambda_hat = f[7].empty() ? 0.0 : std::stod(f[7]);
      r.source = f[8];
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw IoError(path + ": bad number at line " + std::to_string(lineno));
    }
  }
  return rows;
}

std::vector<MetricsRow> score_tracks(const std::vector<TrackRow>& tracks,
                                     const std::vector<GroundTruthTrack>& truth, long n_frames,
                                     double T, const GospaParams& prm) {
  std::map<long, std::vector<Eigen::Vector2d>> est;
  for (const auto& r : tracks) est[r.k].emplace_back(r.px, r.py);
  std::vector<MetricsRow> rows;
  for (long k = 0; k < n_frames; ++k) {
    const auto tp = truth_positions(truth, k * T);
    const auto& ep = est[k];
    MetricsRow m;
    m.k = k;
    m.g = gospa(tp, ep, prm);
    m.n_truth = static_cast<int>(tp.size());
    m.n_est = static_cast<int>(ep.size());
    rows.push_back(m);
  }
  return rows;
}

namespace {

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw IoError("cannot write " + p.string());
  return os;
}

}  // namespace

long run_pipeline(const PipelineConfig& cfg_in) {
  cfg_in.validate();
  PipelineConfig cfg = cfg_in;
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);

  std::vector<std::string> stems;
  std::optional<ScenarioConfig> scen;
  std::optional<ScenarioTruth> scen_truth;
  std::vector<GroundTruthTrack> truth;
  FrameGeometry raw_geom;

  if (!cfg.frames_dir.empty()) {
    stems = list_frame_stems(cfg.frames_dir);
    if (stems.empty()) throw IoError("no frames found in " + cfg.frames_dir);
    try {
      raw_geom = read_frame(stems.front()).geom;
    } catch (const std::exception& e) {
      throw IoError("frame 0 (" + stems.front() + "): " + e.what());
    }
    if (cfg.truth_file.empty() && fs::exists(fs::path(cfg.frames_dir) / "truth.csv"))
      cfg.truth_file = (fs::path(cfg.frames_dir) / "truth.csv").string();
    if (!cfg.detect.sgbd_scale_set) {
      fs::path cal = cfg.calibration_file.empty() ? fs::path(cfg.frames_dir) / "calibration.json"
                                                  : fs::path(cfg.calibration_file);
      if (fs::exists(cal)) {
        cfg.detect.sgbd.scale = read_calibration(cal.string());
      } else {
        std::vector<RadarFrame> train;
        for (std::size_t i = 0; i < stems.size() && static_cast<int>(i) < cfg.calibration_frames; ++i)
          train.push_back(crop_frame(read_frame(stems[i]), cfg.crop));
        cfg.detect.sgbd.scale = calibrate_sgbd(train, cfg.detect.sgbd.sigma_s);
        std::cerr << "note: no calibration file, SGBD scale taken from the first " << train.size()
                  << " frames\n";
      }
      cfg.detect.sgbd_scale_set = true;
    }
  } else {
    scen = load_scenario(cfg.scenario_file);
    if (cfg.seed) scen->seed = *cfg.seed;
    scen_truth = generate_scenario(*scen);
    raw_geom = scen->geom;
    truth = scen_truth->tracks;
    if (!cfg.detect.sgbd_scale_set) {
      cfg.detect.sgbd.scale = cfg.calibration_file.empty()
                                  ? calibrate_scenario(*scen, cfg.calibration_frames, cfg.detect.sgbd.sigma_s)
                                  : read_calibration(cfg.calibration_file);
      cfg.detect.sgbd_scale_set = true;
    }
  }
  if (!cfg.truth_file.empty()) truth = read_truth_csv(cfg.truth_file);
  const bool have_truth = !cfg.truth_file.empty() || scen.has_value();

  std::optional<LandMask> mask;
  if (!cfg.mask_stem.empty()) {
    LandMask m = load_mask(cfg.mask_stem);
    if (cfg.crop.active() && m.geom.same_shape(raw_geom)) m = crop_mask(m, cfg.crop);
    mask = m;
  }
  const FrameGeometry geom = cfg.crop.active() ? crop_frame(make_frame(raw_geom), cfg.crop).geom : raw_geom;

  HybridTracker tracker(cfg, geom, mask);
  std::ofstream tracks = open_out(out / "tracks.csv");
  write_tracks_header(tracks);
  std::ofstream warn = open_out(out / "warnings.csv");
  warn << "k,pmbm_label,tbd_label,distance\n";
  std::optional<std::ofstream> timing;
  if (cfg.timing) {
    timing = open_out(out / "timing.csv");
    *timing << "k,preprocess_ms,detect_ms,pmbm_ms,tbd_ms,fuse_ms,total_ms\n";
  }
  if (cfg.emit_scoremaps) fs::create_directories(out / "scoremaps");

  std::vector<MetricsRow> metrics;
  const long n = scen ? scen->K : static_cast<long>(stems.size());
  for (long i = 0; i < n; ++i) {
    RadarFrame frame;
    if (scen) {
      frame = render_frame(*scen, *scen_truth, i);
    } else {
      try {
        frame = read_frame(stems[i]);
      } catch (const std::exception& e) {
        std::ostringstream os;
        os << "frame " << i << " (" << stems[i] << "): " << e.what();
        throw IoError(os.str());
      }
      if (!frame.geom.same_shape(raw_geom)) {
        std::ostringstream os;
        os << "frame " << i << " (" << stems[i] << "): grid differs from frame 0";
        throw IoError(os.str());
      }
    }
    frame = crop_frame(frame, cfg.crop);
    ScoreMap sm;
    const FrameResult res = tracker.step(frame, cfg.emit_scoremaps ? &sm : nullptr);
    write_tracks_rows(tracks, res.fused);
    char buf[256];
    for (const auto& w : res.warnings) {
      std::snprintf(buf, sizeof buf, "%ld,%ld,%ld,%.3f\n", res.k, w.pmbm_label, w.tbd_label, w.distance);
      warn << buf;
    }
    if (timing) {
      const auto& t = res.times;
      std::snprintf(buf, sizeof buf, "%ld,%.3f,%.3f,%.3f,%.3f,%.3f,%.3f\n", res.k, t.preprocess, t.detect, t.pmbm,
                    t.tbd, t.fuse, t.total);
      *timing << buf;
    }
    if (cfg.emit_scoremaps) {
      RadarFrame sf = make_frame(sm.geom, res.k);
      for (std::size_t j = 0; j < sm.s.size(); ++j) sf.z[j] = static_cast<float>(sm.s[j]);
      char name[64];
      std::snprintf(name, sizeof name, "score_%06ld", res.k);
      write_frame(sf, (out / "scoremaps" / name).string());
    }
    if (have_truth) {
      std::vector<Eigen::Vector2d> est;
      for (const auto& e : res.fused) est.emplace_back(e.state(0), e.state(2));
      const auto tp = truth_positions(truth, res.k * cfg.motion.T);
      metrics.push_back({res.k, gospa(tp, est, cfg.gospa), static_cast<int>(tp.size()),
                         static_cast<int>(est.size())});
    }
  }
  if (!tracks) throw IoError("write failed: tracks.csv");
  if (have_truth) write_metrics_csv((out / "metrics.csv").string(), metrics);

  nlohmann::json man;
  man["tool"] = "hytrack";
  man["version"] = "0.1.0";
  man["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                 std::to_string(EIGEN_MINOR_VERSION);
  man["frames"] = n;
  if (scen) man["scenario_seed"] = scen->seed;
  man["config"] = nlohmann::json::parse(pipeline_config_to_json(cfg));
  std::ofstream mf = open_out(out / "manifest.json");
  mf << man.dump(2) << '\n';
  return n;
}

}  // namespace hytrack
