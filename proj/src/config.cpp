#include "hytrack/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "hytrack/errors.hpp"
#include "json.hpp"

namespace hytrack {

using nlohmann::json;

namespace {

constexpr double kDeg = kPi / 180.0;

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Reads known keys and reports the rest.
class Reader {
 public:
  Reader(const json& j, std::string path, std::vector<std::string>* errors)
      : j_(j), path_(std::move(path)), errors_(errors) {
    if (!j_.is_object()) errors_->push_back(path_ + ": expected an object");
  }
  ~Reader() {
    if (!j_.is_object()) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) errors_->push_back("unknown key " + name(it.key()));
  }

  bool has(const std::string& k) const { return j_.is_object() && j_.contains(k); }

  template <class T>
  void get(const std::string& k, T& out) {
    if (!has(k)) return;
    used_.insert(k);
    try {
      out = j_.at(k).get<T>();
    } catch (const json::exception&) {
      errors_->push_back(name(k) + ": wrong type");
    }
  }

  void get_deg(const std::string& k, double& rad) {
    double d = rad / kDeg;
    if (!has(k)) return;
    get(k, d);
    rad = d * kDeg;
  }

  template <class T>
  void get_opt(const std::string& k, std::optional<T>& out) {
    if (!has(k)) return;
    T v{};
    get(k, v);
    out = v;
  }

  void get_vec2(const std::string& k, Eigen::Vector2d& out) {
    if (!has(k)) return;
    std::vector<double> v;
    get(k, v);
    if (v.size() != 2) {
      errors_->push_back(name(k) + ": expected [x, y]");
      return;
    }
    out = {v[0], v[1]};
  }

  Reader sub(const std::string& k) {
    used_.insert(k);
    return Reader(has(k) ? j_.at(k) : empty(), name(k), errors_);
  }

  const json& raw(const std::string& k) {
    used_.insert(k);
    return j_.at(k);
  }

  std::string name(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

 private:
  static const json& empty() {
    static const json e = json::object();
    return e;
  }
  const json& j_;
  std::string path_;
  std::vector<std::string>* errors_;
  std::set<std::string> used_;
};

void throw_if(const std::vector<std::string>& errors, const std::string& what) {
  if (errors.empty()) return;
  std::string msg = what + ":";
  for (const auto& e : errors) msg += "\n  " + e;
  throw ConfigError(msg);
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
}

std::vector<Eigen::Vector2d> read_points(const json& j, const std::string& where,
                                         std::vector<std::string>* errors) {
  std::vector<Eigen::Vector2d> out;
  if (!j.is_array()) {
    errors->push_back(where + ": expected a list of [x, y]");
    return out;
  }
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
      errors->push_back(where + ": expected [x, y] pairs");
      return {};
    }
    out.emplace_back(p[0].get<double>(), p[1].get<double>());
  }
  return out;
}

json points_json(const std::vector<Eigen::Vector2d>& pts) {
  json a = json::array();
  for (const auto& p : pts) a.push_back({p(0), p(1)});
  return a;
}

}  // namespace

void PipelineConfig::validate() const {
  std::vector<std::string> e;
  if (frames_dir.empty() == scenario_file.empty())
    e.push_back("exactly one of input.frames and input.scenario must be given");
  if (out_dir.empty()) e.push_back("output directory is empty");
  if (threads < 1) e.push_back("threads must be >= 1");
  if (!(detect.tau_low >= 0 && detect.tau_low <= 1) || !(detect.tau_high >= 0 && detect.tau_high <= 1))
    e.push_back("detection thresholds must lie in [0,1]");
  if (detect.tau_low > detect.tau_high) e.push_back("tau_low must not exceed tau_high");
  if (!(detect.sgbd.sigma_s > 0)) e.push_back("detect.sigma_s must be positive");
  if (!(detect.sgbd.scale > 0)) e.push_back("detect.sgbd_scale must be positive");
  if (!(detect.dbscan.eps_cells > 0) || detect.dbscan.min_points < 1) e.push_back("invalid DBSCAN parameters");
  if (!(motion.T > 0) || !(motion.q >= 0)) e.push_back("motion: need T > 0 and q >= 0");
  if (!(measurement.sigma_r > 0 && measurement.sigma_theta > 0)) e.push_back("measurement stds must be positive");
  if (calibration_frames < 1) e.push_back("calibration_frames must be >= 1");
  if (!(gospa.c > 0) || !(gospa.p >= 1) || gospa.alpha != 2.0) e.push_back("gospa: need c > 0, p >= 1, alpha = 2");
  if (crop.active()) {
    if (crop.range_end >= 0 && (crop.range_begin < 0 || crop.range_end <= crop.range_begin))
      e.push_back("crop: empty range window");
    if (crop.azimuth_end >= 0 && (crop.azimuth_begin < 0 || crop.azimuth_end <= crop.azimuth_begin))
      e.push_back("crop: empty azimuth window");
  }
  try {
    pmbm.validate();
  } catch (const ConfigError& x) {
    e.push_back(x.what());
  }
  try {
    tbd.validate();
  } catch (const ConfigError& x) {
    e.push_back(x.what());
  }
  throw_if(e, "invalid pipeline configuration");
}

PipelineConfig pipeline_config_from_json(const std::string& text) {
  const json j = parse(text);
  PipelineConfig c;
  std::vector<std::string> e;
  {
    Reader r(j, "", &e);
    {
      Reader in = r.sub("input");
      in.get("frames", c.frames_dir);
      in.get("scenario", c.scenario_file);
    }
    r.get("mask", c.mask_stem);
    r.get("calibration", c.calibration_file);
    r.get("truth", c.truth_file);
    r.get("out", c.out_dir);
    r.get("timing", c.timing);
    r.get("threads", c.threads);
    r.get_opt("seed", c.seed);
    r.get("enable_pmbm", c.enable_pmbm);
    r.get("enable_tbd", c.enable_tbd);
    r.get("emit_scoremaps", c.emit_scoremaps);
    r.get("calibration_frames", c.calibration_frames);
    r.get("clutter_r0", c.clutter_r0);
    r.get("birth_suppress_high", c.birth_suppress_high);
    if (r.has("crop")) {
      Reader cr = r.sub("crop");
      std::vector<int> rr, aa;
      cr.get("range", rr);
      cr.get("azimuth", aa);
      if (rr.size() == 2) c.crop.range_begin = rr[0], c.crop.range_end = rr[1];
      else if (!rr.empty()) e.push_back("crop.range: expected [begin, end)");
      if (aa.size() == 2) c.crop.azimuth_begin = aa[0], c.crop.azimuth_end = aa[1];
      else if (!aa.empty()) e.push_back("crop.azimuth: expected [begin, end)");
    }
    {
      Reader d = r.sub("detect");
      d.get("tau_low", c.detect.tau_low);
      d.get("tau_high", c.detect.tau_high);
      d.get("sigma_s", c.detect.sgbd.sigma_s);
      if (d.has("sgbd_scale")) {
        d.get("sgbd_scale", c.detect.sgbd.scale);
        c.detect.sgbd_scale_set = true;
      }
      d.get("eps_cells", c.detect.dbscan.eps_cells);
      d.get("min_points", c.detect.dbscan.min_points);
    }
    {
      Reader m = r.sub("motion");
      m.get("T", c.motion.T);
      m.get("q", c.motion.q);
    }
    {
      Reader m = r.sub("measurement");
      m.get("sigma_r", c.measurement.sigma_r);
      m.get_deg("sigma_theta_deg", c.measurement.sigma_theta);
    }
    {
      Reader p = r.sub("pmbm");
      auto& q = c.pmbm;
      p.get("p_d", q.p_d);
      p.get("clutter_intensity", q.clutter_intensity);
      p.get("birth_weight", q.birth_weight);
      p.get("gate", q.gate);
      p.get("n_max", q.n_max);
      p.get("t_bp", q.t_bp);
      p.get("t_pp", q.t_pp);
      p.get("t_e", q.t_e);
      p.get("p_s", q.p_s);
      p.get("birth_grid_range", q.birth_grid_range);
      p.get("birth_grid_azimuth", q.birth_grid_azimuth);
      p.get("birth_velocity_std", q.birth_velocity_std);
      if (p.has("birth_region")) {
        Reader b = p.sub("birth_region");
        c.birth_region_set = true;
        b.get("r_min", q.birth_region.r_min);
        b.get("r_max", q.birth_region.r_max);
        b.get_deg("az_min_deg", q.birth_region.az_min);
        b.get_deg("az_max_deg", q.birth_region.az_max);
      }
    }
    {
      Reader t = r.sub("tbd");
      auto& q = c.tbd;
      t.get("p_s", q.p_s);
      t.get("p_b", q.p_b);
      t.get("t_c", q.t_c);
      t.get("t_d", q.t_d);
      t.get("em_max_iters", q.em_max_iters);
      t.get("em_rel_tol", q.em_rel_tol);
      t.get("gate_sigma", q.gate_sigma);
      t.get("epsilon_pmbm", q.epsilon_pmbm);
      t.get("alpha0", q.alpha0);
      t.get("beta0", q.beta0);
      t.get("gamma0", q.gamma0);
      t.get("eta", q.eta);
      t.get("birth_pos_std_cells", q.birth_pos_std_cells);
      t.get("birth_vel_std", q.birth_vel_std);
      t.get("birth_merge_r", q.birth_merge_r);
      t.get("intensity_scale", q.intensity_scale);
      t.get("iekf_iters", q.iekf_iters);
      std::string mode = q.existence_mode == ExistenceMode::Evidence ? "evidence" : "rate_density";
      t.get("existence_mode", mode);
      if (mode == "evidence")
        q.existence_mode = ExistenceMode::Evidence;
      else if (mode == "rate_density")
        q.existence_mode = ExistenceMode::RateDensity;
      else
        e.push_back("tbd.existence_mode must be \"evidence\" or \"rate_density\"");
      t.get("fluctuation_shape", q.fluctuation_shape);
      t.get("yield_frames", q.yield_frames);
    }
    {
      Reader g = r.sub("gospa");
      g.get("c", c.gospa.c);
      g.get("p", c.gospa.p);
      g.get("alpha", c.gospa.alpha);
    }
  }
  throw_if(e, "invalid pipeline configuration");
  return c;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  try {
    return pipeline_config_from_json(slurp(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string pipeline_config_to_json(const PipelineConfig& c) {
  json j;
  if (!c.frames_dir.empty()) j["input"]["frames"] = c.frames_dir;
  if (!c.scenario_file.empty()) j["input"]["scenario"] = c.scenario_file;
  j["mask"] = c.mask_stem;
  j["calibration"] = c.calibration_file;
  j["truth"] = c.truth_file;
  j["out"] = c.out_dir;
  j["timing"] = c.timing;
  j["threads"] = c.threads;
  if (c.seed) j["seed"] = *c.seed;
  j["enable_pmbm"] = c.enable_pmbm;
  j["enable_tbd"] = c.enable_tbd;
  j["emit_scoremaps"] = c.emit_scoremaps;
  j["calibration_frames"] = c.calibration_frames;
  j["clutter_r0"] = c.clutter_r0;
  j["birth_suppress_high"] = c.birth_suppress_high;
  if (c.crop.active()) {
    if (c.crop.range_end >= 0) j["crop"]["range"] = {c.crop.range_begin, c.crop.range_end};
    if (c.crop.azimuth_end >= 0) j["crop"]["azimuth"] = {c.crop.azimuth_begin, c.crop.azimuth_end};
  }
  j["detect"] = {{"tau_low", c.detect.tau_low},       {"tau_high", c.detect.tau_high},
                 {"sigma_s", c.detect.sgbd.sigma_s},
                 {"eps_cells", c.detect.dbscan.eps_cells}, {"min_points", c.detect.dbscan.min_points}};
  // Left out when unset so a loaded config still calibrates.
  if (c.detect.sgbd_scale_set) j["detect"]["sgbd_scale"] = c.detect.sgbd.scale;
  j["motion"] = {{"T", c.motion.T}, {"q", c.motion.q}};
  j["measurement"] = {{"sigma_r", c.measurement.sigma_r},
                      {"sigma_theta_deg", c.measurement.sigma_theta / kDeg}};
  const auto& p = c.pmbm;
  j["pmbm"] = {{"p_d", p.p_d},
               {"clutter_intensity", p.clutter_intensity},
               {"birth_weight", p.birth_weight},
               {"gate", p.gate},
               {"n_max", p.n_max},
               {"t_bp", p.t_bp},
               {"t_pp", p.t_pp},
               {"t_e", p.t_e},
               {"p_s", p.p_s},
               {"birth_grid_range", p.birth_grid_range},
               {"birth_grid_azimuth", p.birth_grid_azimuth},
               {"birth_velocity_std", p.birth_velocity_std}};
  if (c.birth_region_set)
    j["pmbm"]["birth_region"] = {{"r_min", p.birth_region.r_min},
                                 {"r_max", p.birth_region.r_max},
                                 {"az_min_deg", p.birth_region.az_min / kDeg},
                                 {"az_max_deg", p.birth_region.az_max / kDeg}};
  const auto& t = c.tbd;
  j["tbd"] = {{"p_s", t.p_s},
              {"p_b", t.p_b},
              {"t_c", t.t_c},
              {"t_d", t.t_d},
              {"em_max_iters", t.em_max_iters},
              {"em_rel_tol", t.em_rel_tol},
              {"gate_sigma", t.gate_sigma},
              {"epsilon_pmbm", t.epsilon_pmbm},
              {"alpha0", t.alpha0},
              {"beta0", t.beta0},
              {"gamma0", t.gamma0},
              {"eta", t.eta},
              {"birth_pos_std_cells", t.birth_pos_std_cells},
              {"birth_vel_std", t.birth_vel_std},
              {"birth_merge_r", t.birth_merge_r},
              {"intensity_scale", t.intensity_scale},
              {"iekf_iters", t.iekf_iters},
              {"existence_mode", t.existence_mode == ExistenceMode::Evidence ? "evidence" : "rate_density"},
              {"fluctuation_shape", t.fluctuation_shape},
              {"yield_frames", t.yield_frames}};
  j["gospa"] = {{"c", c.gospa.c}, {"p", c.gospa.p}, {"alpha", c.gospa.alpha}};
  return j.dump(2);
}

ScenarioConfig scenario_from_json(const std::string& text) {
  const json j = parse(text);
  ScenarioConfig c;
  c.geom = default_geometry();
  std::vector<std::string> e;
  {
    Reader r(j, "", &e);
    {
      Reader g = r.sub("geometry");
      const bool az_given = g.has("azimuth_offset_deg");
      g.get("n_range", c.geom.n_range);
      g.get("n_azimuth", c.geom.n_azimuth);
      g.get("range_res", c.geom.range_res);
      g.get_deg("azimuth_res_deg", c.geom.azimuth_res);
      g.get("range_offset", c.geom.range_offset);
      if (az_given) g.get_deg("azimuth_offset_deg", c.geom.azimuth_offset);
      else c.geom.azimuth_offset = -0.5 * c.geom.n_azimuth * c.geom.azimuth_res;
    }
    r.get("K", c.K);
    r.get("seed", c.seed);
    r.get("T", c.T);
    {
      Reader p = r.sub("psf");
      p.get("sigma_r", c.psf.sigma_r);
      p.get_deg("sigma_theta_deg", c.psf.sigma_theta);
    }
    {
      Reader cl = r.sub("clutter");
      cl.get("lambda0", c.clutter_lambda0);
      cl.get("r0", c.clutter_r0);
      cl.get("shape", c.clutter_shape);
    }
    if (r.has("targets")) {
      const json& ts = r.raw("targets");
      if (!ts.is_array()) e.push_back("targets: expected a list");
      else {
        long next_id = 1;
        for (std::size_t i = 0; i < ts.size(); ++i) {
          Reader t(ts[i], "targets[" + std::to_string(i) + "]", &e);
          TargetSpec s;
          s.id = next_id;
          t.get("id", s.id);
          next_id = s.id + 1;
          t.get("birth_k", s.birth_k);
          t.get("death_k", s.death_k);
          t.get_vec2("position", s.position);
          t.get_vec2("velocity", s.velocity);
          if (t.has("waypoints")) s.waypoints = read_points(t.raw("waypoints"), t.name("waypoints"), &e);
          t.get("speed", s.speed);
          t.get("snr_db", s.snr_db);
          t.get_opt("snr_db_end", s.snr_db_end);
          t.get_opt("rate", s.rate);
          t.get("fluctuating", s.fluctuating);
          c.targets.push_back(s);
        }
      }
    }
    if (r.has("land")) {
      Reader l = r.sub("land");
      l.get("level", c.land_level);
      l.get("noise", c.land_noise);
      if (l.has("polygons")) {
        const json& ps = l.raw("polygons");
        if (!ps.is_array()) e.push_back("land.polygons: expected a list");
        else
          for (std::size_t i = 0; i < ps.size(); ++i)
            c.land.push_back(read_points(ps[i], "land.polygons[" + std::to_string(i) + "]", &e));
      }
    }
  }
  throw_if(e, "invalid scenario");
  try {
    c.validate();
  } catch (const std::exception& x) {
    throw ConfigError(x.what());
  }
  return c;
}

ScenarioConfig load_scenario(const std::string& path) {
  try {
    return scenario_from_json(slurp(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string scenario_to_json(const ScenarioConfig& c) {
  json j;
  j["geometry"] = {{"n_range", c.geom.n_range},
                   {"n_azimuth", c.geom.n_azimuth},
                   {"range_res", c.geom.range_res},
                   {"azimuth_res_deg", c.geom.azimuth_res / kDeg},
                   {"range_offset", c.geom.range_offset},
                   {"azimuth_offset_deg", c.geom.azimuth_offset / kDeg}};
  j["K"] = c.K;
  j["seed"] = c.seed;
  j["T"] = c.T;
  j["psf"] = {{"sigma_r", c.psf.sigma_r}, {"sigma_theta_deg", c.psf.sigma_theta / kDeg}};
  j["clutter"] = {{"lambda0", c.clutter_lambda0}, {"r0", c.clutter_r0}, {"shape", c.clutter_shape}};
  json ts = json::array();
  for (const auto& t : c.targets) {
    json o = {{"id", t.id},
              {"birth_k", t.birth_k},
              {"death_k", t.death_k},
              {"snr_db", t.snr_db},
              {"fluctuating", t.fluctuating}};
    if (t.waypoints.empty()) {
      o["position"] = {t.position(0), t.position(1)};
      o["velocity"] = {t.velocity(0), t.velocity(1)};
    } else {
      o["waypoints"] = points_json(t.waypoints);
      o["speed"] = t.speed;
    }
    if (t.snr_db_end) o["snr_db_end"] = *t.snr_db_end;
    if (t.rate) o["rate"] = *t.rate;
    ts.push_back(o);
  }
  j["targets"] = ts;
  if (!c.land.empty()) {
    json ps = json::array();
    for (const auto& p : c.land) ps.push_back(points_json(p));
    j["land"] = {{"polygons", ps}, {"level", c.land_level}, {"noise", c.land_noise}};
  }
  return j.dump(2);
}

}  // namespace hytrack
