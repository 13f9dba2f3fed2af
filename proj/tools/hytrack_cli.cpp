#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "hytrack/config.hpp"
#include "hytrack/errors.hpp"
#include "hytrack/pipeline.hpp"
#include "hytrack/preprocess.hpp"
#include "hytrack/simulator.hpp"

namespace fs = std::filesystem;
using namespace hytrack;

namespace {

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream os(p);
  if (!os) throw IoError("cannot write " + p.string());
  os << s << '\n';
}

ScenarioConfig scenario_arg(const std::string& file, const std::string& bundled) {
  if (!file.empty() && !bundled.empty()) throw ConfigError("give either --scenario or --bundled, not both");
  if (!bundled.empty()) return bundled_scenario(bundled);
  if (file.empty()) throw ConfigError("a scenario is required (--scenario or --bundled)");
  return load_scenario(file);
}

void simulate(const ScenarioConfig& sc, const fs::path& out, int threads, int calib_frames, double sigma_s) {
  fs::create_directories(out);
  const ScenarioTruth truth = generate_scenario(sc);
  write_text(out / "scenario.json", scenario_to_json(sc));
  write_truth_csv(truth, (out / "truth.csv").string());
  // Frames are independent given the truth; each thread takes every n-th one.
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errs(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (long k = t; k < sc.K; k += threads) write_frame(render_frame(sc, truth, k), frame_stem(out.string(), k));
      } catch (...) {
        errs[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
  write_calibration((out / "calibration.json").string(), calibrate_scenario(sc, calib_frames, sigma_s), sigma_s);
  if (!sc.land.empty()) {
    const auto lc = land_cells(sc);
    write_bool_grid(sc.geom, lc, (out / "land_truth").string());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hytrack: hybrid point / track-before-detect radar tracker"};
  app.require_subcommand(1);

  // simulate
  std::string sim_scenario, sim_bundled, sim_out = "frames";
  std::uint64_t sim_seed = 0;
  bool sim_seed_set = false;
  int sim_threads = 1, sim_calib = 8;
  auto* sim = app.add_subcommand("simulate", "Render a scenario to frames, truth and calibration");
  sim->add_option("--scenario,--config", sim_scenario, "Scenario JSON file");
  sim->add_option("--bundled", sim_bundled, "Built-in scenario name");
  sim->add_option("--out", sim_out, "Output directory");
  sim->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) { sim_seed = s, sim_seed_set = true; });
  sim->add_option("--threads", sim_threads)->check(CLI::PositiveNumber);
  sim->add_option("--calibration-frames", sim_calib)->check(CLI::PositiveNumber);

  // mask
  std::string mask_frames, mask_out = "mask";
  int mask_dr = 2, mask_da = 2, mask_train = 0;
  double mask_tau = -1, mask_pct = 99.5;
  bool mask_calibrate = false;
  auto* msk = app.add_subcommand("mask", "Estimate the background and land mask from training frames");
  msk->add_option("--frames", mask_frames, "Directory of training frames")->required();
  msk->add_option("--out", mask_out, "Output directory");
  msk->add_option("--tau", mask_tau, "Land threshold (default: sea-cell percentile)");
  msk->add_option("--percentile", mask_pct, "Percentile for the default threshold");
  msk->add_option("--dilate-range", mask_dr)->check(CLI::NonNegativeNumber);
  msk->add_option("--dilate-azimuth", mask_da)->check(CLI::NonNegativeNumber);
  msk->add_option("--train", mask_train, "Use only the first N frames (0 = all)")->check(CLI::NonNegativeNumber);
  msk->add_flag("--calibrate", mask_calibrate, "Also write calibration.json from the masked training frames");

  // track
  std::string trk_config, trk_frames, trk_scenario, trk_mask, trk_truth, trk_out;
  std::uint64_t trk_seed = 0;
  bool trk_seed_set = false, no_tbd = false, no_pmbm = false, emit = false, timing = false;
  int trk_threads = 1;
  double tau_low = -1, tau_high = -1;
  auto* trk = app.add_subcommand("track", "Run the hybrid tracker");
  trk->add_option("--config", trk_config, "Pipeline JSON config");
  trk->add_option("--frames", trk_frames, "Frames directory (overrides the config input)");
  trk->add_option("--scenario", trk_scenario, "Scenario JSON rendered on the fly");
  trk->add_option("--mask", trk_mask, "Land mask stem");
  trk->add_option("--truth", trk_truth, "Truth CSV for GOSPA");
  trk->add_option("--out", trk_out, "Output directory");
  trk->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) { trk_seed = s, trk_seed_set = true; });
  trk->add_option("--threads", trk_threads)->check(CLI::PositiveNumber);
  trk->add_flag("--no-tbd", no_tbd);
  trk->add_flag("--no-pmbm", no_pmbm);
  trk->add_option("--tau-low", tau_low);
  trk->add_option("--tau-high", tau_high);
  trk->add_flag("--emit-scoremaps", emit);
  trk->add_flag("--timing", timing, "Write per-stage timing.csv");

  // score
  std::string sc_tracks, sc_truth, sc_out = "metrics.csv";
  double sc_T = 2.5;
  GospaParams sc_prm;
  long sc_frames = -1;
  auto* scr = app.add_subcommand("score", "GOSPA of a tracks file against truth");
  scr->add_option("--tracks", sc_tracks)->required();
  scr->add_option("--truth", sc_truth)->required();
  scr->add_option("--out", sc_out);
  scr->add_option("--T", sc_T, "Frame period in seconds");
  scr->add_option("--c", sc_prm.c);
  scr->add_option("--p", sc_prm.p);
  scr->add_option("--frames", sc_frames, "Number of frames (default: from the inputs)");

  // demo
  std::string demo_out = "demo_out";
  std::uint64_t demo_seed = 1;
  int demo_threads = 1;
  auto* demo = app.add_subcommand("demo", "Simulate and track the bundled demo scenario");
  demo->add_option("--out", demo_out);
  demo->add_option("--seed", demo_seed);
  demo->add_option("--threads", demo_threads)->check(CLI::PositiveNumber);
  demo->add_flag("--timing", timing);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      ScenarioConfig sc = scenario_arg(sim_scenario, sim_bundled);
      if (sim_seed_set) sc.seed = sim_seed;
      simulate(sc, sim_out, sim_threads, sim_calib, SgbdConfig{}.sigma_s);
      std::cout << "wrote " << sc.K << " frames to " << sim_out << '\n';
    } else if (*msk) {
      auto stems = list_frame_stems(mask_frames);
      if (stems.empty()) throw IoError("no frames in " + mask_frames);
      if (mask_train > 0 && static_cast<std::size_t>(mask_train) < stems.size()) stems.resize(mask_train);
      std::vector<RadarFrame> frames;
      for (const auto& s : stems) frames.push_back(read_frame(s));
      const Background bg = compute_background(frames);
      const double tau = mask_tau >= 0 ? mask_tau : default_land_threshold(frames, bg, mask_pct);
      const LandMask m = build_land_mask(bg, tau, mask_dr, mask_da);
      fs::create_directories(mask_out);
      RadarFrame bf = make_frame(bg.geom);
      for (std::size_t i = 0; i < bg.b.size(); ++i) bf.z[i] = static_cast<float>(bg.b[i]);
      write_frame(bf, (fs::path(mask_out) / "background").string());
      save_mask(m, (fs::path(mask_out) / "mask").string());
      if (mask_calibrate) {
        const double s = calibrate_sgbd(frames, SgbdConfig{}.sigma_s, 0.9999, 0.15, &m);
        write_calibration((fs::path(mask_out) / "calibration.json").string(), s, SgbdConfig{}.sigma_s);
      }
      std::cout << "tau " << tau << ", masked cells " << m.count() << " of " << m.cells.size() << '\n';
    } else if (*trk) {
      PipelineConfig cfg = trk_config.empty() ? PipelineConfig{} : load_pipeline_config(trk_config);
      if (!trk_frames.empty() || !trk_scenario.empty()) {
        cfg.frames_dir = trk_frames;
        cfg.scenario_file = trk_scenario;
      }
      if (!trk_mask.empty()) cfg.mask_stem = trk_mask;
      if (!trk_truth.empty()) cfg.truth_file = trk_truth;
      if (!trk_out.empty()) cfg.out_dir = trk_out;
      if (trk_seed_set) cfg.seed = trk_seed;
      cfg.threads = trk_threads;
      if (no_tbd) cfg.enable_tbd = false;
      if (no_pmbm) cfg.enable_pmbm = false;
      if (tau_low >= 0) cfg.detect.tau_low = tau_low;
      if (tau_high >= 0) cfg.detect.tau_high = tau_high;
      if (emit) cfg.emit_scoremaps = true;
      if (timing) cfg.timing = true;
      const long n = run_pipeline(cfg);
      std::cout << "tracked " << n << " frames, outputs in " << cfg.out_dir << '\n';
    } else if (*scr) {
      const auto tracks = read_tracks_csv(sc_tracks);
      const auto truth = read_truth_csv(sc_truth);
      long n = sc_frames;
      if (n < 0) {
        n = 0;
        for (const auto& r : tracks) n = std::max(n, r.k + 1);
        for (const auto& t : truth)
          if (!t.samples.empty()) n = std::max(n, static_cast<long>(std::llround(t.samples.back().t / sc_T)) + 1);
      }
      const auto rows = score_tracks(tracks, truth, n, sc_T, sc_prm);
      write_metrics_csv(sc_out, rows);
      std::cout << "mean GOSPA " << average_metrics(rows).g.total << " m over " << n << " frames\n";
    } else if (*demo) {
      ScenarioConfig sc = bundled_scenario("demo", demo_seed);
      const fs::path out(demo_out);
      simulate(sc, out / "frames", demo_threads, 8, SgbdConfig{}.sigma_s);
      PipelineConfig cfg;
      cfg.frames_dir = (out / "frames").string();
      cfg.out_dir = (out / "tracks").string();
      cfg.threads = demo_threads;
      cfg.timing = timing;
      run_pipeline(cfg);
      const auto rows = score_tracks(read_tracks_csv((out / "tracks" / "tracks.csv").string()),
                                     read_truth_csv((out / "frames" / "truth.csv").string()), sc.K, sc.T, {});
      std::cout << "demo: " << sc.K << " frames, mean GOSPA " << average_metrics(rows).g.total << " m, outputs in "
                << out.string() << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
