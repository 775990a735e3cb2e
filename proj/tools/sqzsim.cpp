#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "sqz/config.hpp"
#include "sqz/events.hpp"
#include "sqz/stats.hpp"
#include "sqz/sweeps.hpp"
#include "sqz/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace sqz;

namespace {

constexpr int kNMax = 30;

class Run {
 public:
  Run(std::string command, fs::path dir, uint64_t seed) : command_(std::move(command)), dir_(std::move(dir)) {
    fs::create_directories(dir_);
    manifest_["command"] = command_;
    manifest_["seed"] = seed;
    manifest_["version"] = kVersion;
    json mods = json::object();
    for (const char* m : {"model", "pump", "moments", "fockoracle", "schmidt", "observables",
                          "multiphoton", "stats", "events", "cli"})
      mods[m] = kVersion;
    manifest_["module_versions"] = mods;
  }

  std::string manifest_name() const { return "manifest_" + command_ + ".json"; }
  json& manifest() { return manifest_; }
  json& summary() { return manifest_["summary"]; }

  // Written to a temporary name and renamed, so readers never see partial files.
  void write(const std::string& name, const std::function<void(std::ostream&)>& body) {
    const fs::path tmp = dir_ / (name + ".tmp");
    {
      std::ofstream f(tmp);
      require(f.good(), ErrorKind::config, "cannot write " + tmp.string());
      if (name.size() > 4 && name.substr(name.size() - 4) == ".csv")
        f << "# manifest=" << manifest_name() << '\n';
      body(f);
      require(f.good(), ErrorKind::config, "write failed for " + tmp.string());
    }
    fs::rename(tmp, dir_ / name);
    outputs_.push_back(name);
  }

  void write_json(const std::string& name, json j) {
    j["manifest"] = manifest_name();
    write(name, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  }

  template <class F>
  auto stage(const std::string& name, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    auto record = [&] {
      stages_[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    if constexpr (std::is_void_v<std::invoke_result_t<F>>) {
      f();
      record();
    } else {
      auto r = f();
      record();
      return r;
    }
  }

  void finish() {
    manifest_["outputs"] = outputs_;
    manifest_["wall_clock_s"] = stages_;
    const fs::path tmp = dir_ / (manifest_name() + ".tmp");
    {
      std::ofstream f(tmp);
      require(f.good(), ErrorKind::config, "cannot write manifest");
      f << manifest_.dump(2) << '\n';
    }
    fs::rename(tmp, dir_ / manifest_name());
  }

 private:
  std::string command_;
  fs::path dir_;
  json manifest_;
  std::vector<std::string> outputs_;
  json stages_ = json::object();
};

struct Globals {
  std::string output_dir;
  uint64_t seed = 0;
  unsigned workers = 0;

  fs::path dir() const {
    if (!output_dir.empty()) return output_dir;
    if (const char* env = std::getenv("SQZ_OUTPUT_DIR"); env && *env) return env;
    return "sqz_out";
  }
};

RunConfig load(const std::string& path) {
  if (!path.empty()) return load_config(path);
  std::istringstream empty;
  return parse_config(empty);
}

struct State {
  RunConfig cfg;
  PumpTrajectory traj;
  MomentState moments;
  AnalysisGrid window;
  TwoTimeMoment tt;
  SchmidtDecomposition d;
  JointTemporalAmplitude jt;
};

State build_state(const RunConfig& cfg, int grid_n, double grid_dt, unsigned workers) {
  State s{cfg, {}, {}, {}, {}, {}, {}};
  s.traj = solve_pump(cfg.params, cfg.pulse, cfg.grid);
  s.moments = evolve_moments(s.traj, cfg.params);
  s.window = analysis_grid(s.moments, grid_n, grid_dt);
  s.tt = two_time_correlators(s.traj, cfg.params, s.window.grid, {}, workers);
  s.d = decompose(s.tt);
  s.jt = jta(s.d);
  return s;
}

json state_summary(const State& s) {
  const auto& p = s.cfg.params;
  json j;
  j["energy_pj"] = s.cfg.pulse.energy_pj();
  j["n_per_pulse"] = n_per_pulse(s.moments, p);
  j["mean_pairs"] = s.d.mean_pairs();
  j["window"] = {{"t_start_ps", s.window.grid.t_start},
                 {"dt_ps", s.window.grid.dt},
                 {"n_points", s.window.grid.n_points},
                 {"captured", s.window.captured}};
  if (s.d.mean_pairs() > 0.0) {
    j["g2"] = g2_from_schmidt(s.d);
    j["schmidt_number"] = s.d.schmidt_number();
    j["purity"] = s.d.purity();
    j["purity_bound_jti"] = purity_bound(s.jt.jti());
    j["xi_max_db"] = to_db(s.d.xi[0]);
    j["xi_out_max_db"] = to_db(output_squeezing(s.d.xi[0], p.escape_efficiency()));
  }
  j["xi_out_bound_db"] = to_db(output_squeezing_bound(p.escape_efficiency()));
  j["warnings"] = s.moments.warnings;
  if (s.window.captured < 0.99) j["warnings"].push_back("analysis window captures less than 99% of the flux");
  return j;
}

template <class T>
void csv_row(std::ostream& os, const T& v) {
  os << v << '\n';
}
template <class T, class... R>
void csv_row(std::ostream& os, const T& v, const R&... rest) {
  os << v << ',';
  csv_row(os, rest...);
}

// ---------------------------------------------------------------- simulate

void simulate_point(Run& run, const RunConfig& cfg, unsigned workers) {
  const auto s = run.stage("simulate", [&] { return build_state(cfg, 50, 80.0, workers); });
  const auto& p = cfg.params;
  run.write("pump.csv", [&](std::ostream& os) { write_pump_csv(os, s.traj, p); });
  const auto flux = output_flux(s.moments, p);
  run.write("flux.csv", [&](std::ostream& os) {
    os.precision(12);
    os << "t_ps,n_s,flux_per_ps\n";
    for (size_t k = 0; k < flux.size(); ++k) csv_row(os, s.moments.grid.time(int(k)), s.moments.n_s[k], flux[k]);
  });
  run.write("schmidt.csv", [&](std::ostream& os) { write_schmidt_csv(os, s.d, p.escape_efficiency()); });
  json sum = state_summary(s);
  double fmax = 0.0;
  for (double f : flux) fmax = std::max(fmax, f);
  sum["flux_maxima"] = local_maxima(flux, 0.01 * fmax).size();
  if (s.d.mean_pairs() > 0.0) {
    const auto g1 = g1_tilde(s.tt, p);
    const auto sp = single_photon_spectrum(s.tt, default_omega_grid(p.gamma_tot()));
    run.write("g1.csv", [&](std::ostream& os) {
      os.precision(12);
      os << "tau_ps,g1\n";
      for (size_t k = 0; k < g1.x.size(); ++k) csv_row(os, g1.x[k], g1.y[k]);
    });
    run.write("spectrum.csv", [&](std::ostream& os) {
      os.precision(12);
      os << "omega_per_ps,omega_over_gamma,s\n";
      for (size_t k = 0; k < sp.x.size(); ++k) csv_row(os, sp.x[k], sp.x[k] / p.gamma_tot(), sp.y[k]);
    });
    sum["spectral_peaks"] = spectral_peak_count(sp);
  }
  run.summary() = sum;
  run.write_json("observables.json", sum);
}

void write_sweep(std::ostream& os, const std::vector<SweepResult>& rs, double duration, double gamma) {
  for (const auto& r : rs) {
    os << duration << ',' << to_string(r.mode) << ',' << r.energy_pj << ',' << r.delta_p << ','
       << r.delta_p / gamma << ',' << r.n_s << ',' << r.status;
    if (r.schmidt)
      os << ',' << r.schmidt->g2 << ',' << r.schmidt->schmidt_number << ',' << to_db(r.schmidt->xi_max)
         << ',' << to_db(r.schmidt->xi_out_max);
    else
      os << ",,,,";
    os << '\n';
  }
}

constexpr const char* kSweepHeader =
    "duration_ps,mode,energy_pj,delta_p_per_ps,delta_p_over_gamma,n_per_pulse,status,g2,schmidt_number,"
    "xi_db,xi_out_db\n";

void simulate_fig1(Run& run, const RunConfig& cfg, int points, unsigned workers) {
  const auto& base = cfg.params;
  const double T = cfg.pulse.duration_T;
  const auto energies = points > 0 ? lin_space(250.0, 1500.0, points) : std::vector<double>{250, 500, 1000, 1500};
  SweepOptions o;
  o.duration_ps = T;
  struct Curve1 {
    DetuningMode mode;
    double energy, delta;
    MomentState st;
    std::vector<double> dw;
  };
  std::vector<Curve1> curves;
  for (auto mode : {DetuningMode::zero, DetuningMode::optimal})
    for (double e : energies) curves.push_back({mode, e, 0.0, {}, {}});
  run.stage("simulate", [&] {
    parallel_for(curves.size(), [&](size_t k) {
      auto& c = curves[k];
      const auto pulse = device::pulse(c.energy, T);
      c.delta = resolve_detuning(base, pulse, c.mode, o);
      const auto p = base.with_detuning(c.delta);
      const auto tr = solve_pump(p, pulse, device::flux_grid(T));
      c.st = evolve_moments(tr, p);
      c.dw = energy_mismatch(tr, p);
    }, workers);
  });
  json peaks = json::array();
  run.write("fig1_flux.csv", [&](std::ostream& os) {
    os.precision(10);
    os << "mode,energy_pj,delta_p_per_ps,t_ps,flux_per_ps,energy_mismatch_per_ps\n";
    for (const auto& c : curves) {
      const auto f = output_flux(c.st, base);
      for (size_t k = 0; k < f.size(); ++k)
        csv_row(os, to_string(c.mode), c.energy, c.delta, c.st.grid.time(int(k)), f[k], c.dw[k]);
    }
  });
  run.write("fig1_summary.csv", [&](std::ostream& os) {
    os.precision(10);
    os << "mode,energy_pj,delta_p_per_ps,n_per_pulse,flux_maxima\n";
    for (const auto& c : curves) {
      const auto f = output_flux(c.st, base);
      const double fmax = *std::max_element(f.begin(), f.end());
      const size_t m = local_maxima(f, 0.01 * fmax).size();
      csv_row(os, to_string(c.mode), c.energy, c.delta, n_per_pulse(c.st, base), m);
      peaks.push_back({{"mode", to_string(c.mode)}, {"energy_pj", c.energy}, {"flux_maxima", m}});
    }
  });
  run.summary() = {{"curves", peaks}};
}

void simulate_fig2(Run& run, const RunConfig& cfg, int points, unsigned workers) {
  const auto energies = log_space(5.0, 1650.0, points > 0 ? points : 12);
  const double g = cfg.params.gamma_tot();
  json fits = json::array();
  std::ostringstream body;
  body.precision(10);
  run.stage("simulate", [&] {
    for (double T : {800.0, 1200.0, 1600.0})
      for (auto mode : {DetuningMode::zero, DetuningMode::optimal}) {
        SweepOptions o;
        o.duration_ps = T;
        o.workers = workers;
        const auto rs = energy_sweep(cfg.params, energies, mode, o);
        write_sweep(body, rs, T, g);
        std::vector<double> lx, ly;
        for (const auto& r : rs)
          if (r.status == "ok" && r.energy_pj <= 10.0 * energies.front() + 1e-9) {
            lx.push_back(std::log(r.energy_pj));
            ly.push_back(std::log(r.n_s));
          }
        json f = {{"duration_ps", T}, {"mode", to_string(mode)}, {"top_energy_pj", nullptr}};
        if (lx.size() >= 2) f["low_energy_slope"] = linear_fit(lx, ly).slope;
        for (const auto& r : rs)
          if (r.status == "ok") {
            f["top_energy_pj"] = r.energy_pj;
            f["top_n_per_pulse"] = r.n_s;
          }
        fits.push_back(f);
      }
  });
  run.write("fig2.csv", [&](std::ostream& os) { os << kSweepHeader << body.str(); });
  run.summary() = {{"branches", fits}};
  run.write_json("fig2_fit.json", run.summary());
}

void simulate_fig3(Run& run, const RunConfig& cfg, int points, unsigned workers) {
  const auto& base = cfg.params;
  const double g = base.gamma_tot();
  const double T = cfg.pulse.duration_T;
  const auto dps = lin_space(-1.0 * g, 4.0 * g, points > 0 ? points : 51);
  const std::vector<double> scan_e{40.0, 200.0, 500.0};
  std::vector<double> scan(scan_e.size() * dps.size());
  std::vector<std::string> scan_status(scan.size(), "ok");
  SweepOptions o;
  o.duration_ps = T;
  o.workers = workers;
  std::vector<SweepResult> opt;
  run.stage("simulate", [&] {
    parallel_for(scan.size(), [&](size_t k) {
      try {
        scan[k] = pulse_photon_number(base.with_detuning(dps[k % dps.size()]),
                                      device::pulse(scan_e[k / dps.size()], T));
      } catch (const ThresholdExceeded&) {
        scan_status[k] = "threshold";
      }
    }, workers);
    opt = energy_sweep(base, lin_space(10.0, 600.0, points > 0 ? points : 12), DetuningMode::optimal, o);
  });
  run.write("fig3_scan.csv", [&](std::ostream& os) {
    os.precision(10);
    os << "energy_pj,delta_p_per_ps,delta_p_over_gamma,n_per_pulse,status\n";
    for (size_t k = 0; k < scan.size(); ++k)
      csv_row(os, scan_e[k / dps.size()], dps[k % dps.size()], dps[k % dps.size()] / g, scan[k], scan_status[k]);
  });
  run.write("fig3_opt.csv", [&](std::ostream& os) {
    os.precision(10);
    os << kSweepHeader;
    write_sweep(os, opt, T, g);
  });
  std::vector<double> x, y;
  for (const auto& r : opt)
    if (r.status == "ok") {
      x.push_back(r.energy_pj);
      y.push_back(r.delta_p / g);
    }
  json s = {{"points", x.size()}};
  if (x.size() >= 2) {
    const auto f = linear_fit(x, y);
    s["slope_gamma_per_pj"] = f.slope;
    s["intercept_gamma"] = f.intercept;
    s["r2"] = f.r2;
  }
  run.summary() = s;
  run.write_json("fig3_fit.json", s);
}

void simulate_fig4(Run& run, const RunConfig& cfg, int points, unsigned workers) {
  const auto& base = cfg.params;
  const double g = base.gamma_tot();
  const double T = cfg.pulse.duration_T;
  SweepOptions o;
  o.duration_ps = T;
  o.decompose = true;
  o.workers = workers;
  const auto dps = lin_space(-1.0 * g, 3.0 * g, points > 0 ? points : 17);
  std::vector<SweepResult> det(dps.size());
  std::vector<SweepResult> en;
  run.stage("simulate", [&] {
    parallel_for(dps.size(), [&](size_t k) {
      auto& r = det[k];
      r.energy_pj = 50.0;
      r.delta_p = dps[k];
      const auto p = base.with_detuning(dps[k]);
      const auto pulse = device::pulse(50.0, T);
      r.n_s = pulse_photon_number(p, pulse);
      r.schmidt = schmidt_metrics(p, pulse, o);
    }, workers);
    const auto es = log_space(10.0, 1650.0, points > 0 ? points : 8);
    for (auto mode : {DetuningMode::zero, DetuningMode::optimal}) {
      const auto rs = energy_sweep(base, es, mode, o);
      en.insert(en.end(), rs.begin(), rs.end());
    }
  });
  run.write("fig4_detuning.csv", [&](std::ostream& os) {
    os.precision(10);
    os << kSweepHeader;
    write_sweep(os, det, T, g);
  });
  run.write("fig4_energy.csv", [&](std::ostream& os) {
    os.precision(10);
    os << kSweepHeader;
    write_sweep(os, en, T, g);
  });
  size_t best = 0;
  for (size_t k = 0; k < det.size(); ++k)
    if (det[k].schmidt->g2 > det[best].schmidt->g2) best = k;
  run.summary() = {{"g2_peak_delta_over_gamma", det[best].delta_p / g}, {"g2_peak", det[best].schmidt->g2}};
}

void simulate_fig5(Run& run, const RunConfig& cfg, unsigned workers) {
  SweepOptions o;
  o.duration_ps = 5000.0;
  const std::vector<std::pair<DetuningMode, double>> cases{
      {DetuningMode::zero, 40.0}, {DetuningMode::zero, 200.0}, {DetuningMode::zero, 1200.0},
      {DetuningMode::optimal, 40.0}, {DetuningMode::optimal, 320.0}};
  std::vector<CoherencePoint> pts(cases.size());
  run.stage("simulate", [&] {
    parallel_for(cases.size(), [&](size_t k) {
      pts[k] = coherence_point(cfg.params, cases[k].second, cases[k].first, o);
    }, workers);
  });
  const double g = cfg.params.gamma_tot();
  run.write("fig5_g1.csv", [&](std::ostream& os) {
    os.precision(10);
    os << "mode,energy_pj,tau_ps,g1,g1_norm\n";
    for (const auto& c : pts) {
      const double y0 = c.g1.y[(c.g1.y.size() - 1) / 2];
      for (size_t k = 0; k < c.g1.x.size(); ++k)
        csv_row(os, to_string(c.mode), c.energy_pj, c.g1.x[k], c.g1.y[k], c.g1.y[k] / y0);
    }
  });
  run.write("fig5_spectrum.csv", [&](std::ostream& os) {
    os.precision(10);
    os << "mode,energy_pj,omega_over_gamma,s\n";
    for (const auto& c : pts)
      for (size_t k = 0; k < c.spectrum.x.size(); ++k)
        csv_row(os, to_string(c.mode), c.energy_pj, c.spectrum.x[k] / g, c.spectrum.y[k]);
  });
  json s = json::array();
  run.write("fig5_summary.csv", [&](std::ostream& os) {
    os.precision(10);
    os << "mode,energy_pj,delta_p_per_ps,pedestal_ratio,spectral_peaks\n";
    for (const auto& c : pts) {
      csv_row(os, to_string(c.mode), c.energy_pj, c.delta_p, c.pedestal, c.spectral_peaks);
      s.push_back({{"mode", to_string(c.mode)}, {"energy_pj", c.energy_pj}, {"pedestal_ratio", c.pedestal},
                   {"spectral_peaks", c.spectral_peaks}});
    }
  });
  run.summary() = {{"points", s}};
}

void simulate_fig9(Run& run, const RunConfig& cfg, int points, unsigned workers) {
  SweepOptions o;
  o.duration_ps = cfg.pulse.duration_T;
  o.decompose = true;
  o.workers = workers;
  const auto es = log_space(10.0, 1650.0, points > 0 ? points : 14);
  std::vector<SweepResult> all;
  run.stage("simulate", [&] {
    for (auto mode : {DetuningMode::zero, DetuningMode::optimal}) {
      const auto rs = energy_sweep(cfg.params, es, mode, o);
      all.insert(all.end(), rs.begin(), rs.end());
    }
  });
  const double bound = to_db(output_squeezing_bound(cfg.params.escape_efficiency()));
  run.write("fig9.csv", [&](std::ostream& os) {
    os.precision(10);
    os << kSweepHeader;
    write_sweep(os, all, o.duration_ps, cfg.params.gamma_tot());
  });
  json s = {{"xi_out_bound_db", bound}};
  for (const auto& r : all)
    if (r.schmidt) {
      s[std::string("top_xi_out_db_") + to_string(r.mode)] = to_db(r.schmidt->xi_out_max);
      s[std::string("top_xi_db_") + to_string(r.mode)] = to_db(r.schmidt->xi_max);
    }
  run.summary() = s;
}

// ---------------------------------------------------------------- other commands

void decompose_cmd(Run& run, const RunConfig& cfg, int grid_n, double grid_dt, unsigned workers) {
  const auto s = run.stage("decompose", [&] { return build_state(cfg, grid_n, grid_dt, workers); });
  run.write("m_matrix.csv", [&](std::ostream& os) { write_matrix_csv(os, s.tt.m_matrix, s.tt.grid, "M"); });
  run.write("c_matrix.csv", [&](std::ostream& os) { write_matrix_csv(os, s.tt.c_matrix, s.tt.grid, "C"); });
  run.write("jta.csv", [&](std::ostream& os) { write_matrix_csv(os, s.jt.j_matrix, s.jt.grid, "J"); });
  run.write("jti.csv", [&](std::ostream& os) { write_histogram_csv(os, s.jt.jti(), s.jt.grid); });
  run.write("schmidt.csv", [&](std::ostream& os) { write_schmidt_csv(os, s.d, cfg.params.escape_efficiency()); });
  run.summary() = state_summary(s);
  run.write_json("decomposition.json", run.summary());
}

ClickModel parse_clicks(const std::string& s) {
  return s == "one_per_bin" ? ClickModel::one_per_bin : ClickModel::one_per_pulse;
}

void synth_cmd(Run& run, const RunConfig& cfg, int64_t pulses, uint64_t seed, const std::string& clicks,
               bool earliest, unsigned workers) {
  const auto s = run.stage("state", [&] { return build_state(cfg, 50, 80.0, workers); });
  SynthConfig sc;
  sc.clicks = parse_clicks(clicks);
  sc.earliest_click = earliest;
  sc.n_max = kNMax;
  SynthReport rep;
  const auto stream = run.stage("synthesize", [&] { return synthesize(s.d, s.jt, cfg.detection, pulses, seed, sc, &rep); });
  run.write("events.csv", [&](std::ostream& os) { write_stream_csv(os, stream); });
  json sum = state_summary(s);
  sum["n_pulses"] = pulses;
  sum["records"] = stream.records.size();
  sum["click_model"] = clicks;
  sum["r_n"] = rep.r.r;
  sum["r_tail"] = rep.r.tail;
  sum["chain_acceptance"] = rep.acceptance;
  if (!rep.warning.empty()) sum["warnings"].push_back(rep.warning);
  run.summary() = sum;
  run.write_json("synth.json", sum);
}

struct CorrectArgs {
  std::string events, h2, h4m, h6m, order = "four", weights = "pairing", clicks = "one_per_pulse";
  int64_t pulses = 0;
  bool fit_eta = false;
};

HistogramFile read_hist(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), ErrorKind::config, "cannot open " + path);
  return read_histogram_csv(f);
}

void correct_cmd(Run& run, const RunConfig& cfg, const CorrectArgs& a, unsigned workers) {
  const auto s = run.stage("state", [&] { return build_state(cfg, 50, 80.0, workers); });
  const auto ports = default_port_map(cfg.detection);
  const ClickModel clicks = parse_clicks(a.clicks);
  CoincidenceHistograms h;
  if (!a.events.empty()) {
    const auto stream = run.stage("ingest", [&] { return ingest(a.events); });
    h = run.stage("histogram", [&] { return histogram(stream, s.jt.grid, ports); });
    run.write("h2.csv", [&](std::ostream& os) { write_histogram_csv(os, h.h2, h.grid); });
    run.write("h4m.csv", [&](std::ostream& os) { write_histogram_csv(os, h.h4m, h.grid); });
    run.write("h6m.csv", [&](std::ostream& os) { write_histogram_csv(os, h.h6m, h.grid); });
    auto meta = histogram_metadata(h, ports);
    meta["malformed_lines"] = stream.malformed_lines;
    run.write_json("histogram.json", meta);
  } else {
    require(!a.h2.empty() && !a.h4m.empty() && a.pulses > 0, ErrorKind::config,
            "need --events, or --h2, --h4m and --pulses");
    const auto f2 = read_hist(a.h2), f4 = read_hist(a.h4m);
    require(f2.grid == f4.grid, ErrorKind::grid_mismatch, "h2 and h4m grids differ");
    h.grid = f2.grid;
    h.h2 = f2.h;
    h.h4m = f4.h;
    h.h6m = Eigen::MatrixXd::Zero(h.h2.rows(), h.h2.cols());
    if (!a.h6m.empty()) {
      const auto f6 = read_hist(a.h6m);
      require(f6.grid == f2.grid, ErrorKind::grid_mismatch, "h6m grid differs");
      h.h6m = f6.h;
    }
    h.n_pulses = a.pulses;
  }
  require(h.n_pulses > 0, ErrorKind::format, "no pulses in the input");
  const auto r = rn_from_schmidt(s.d, kNMax);
  const bool fit = a.fit_eta && !a.events.empty();
  const DetectionModel model = fit ? fit_detection_model(h, ports, r, clicks) : cfg.detection;
  const CoincidenceWeights w = a.weights == "threshold" ? threshold_weights(detection_probs(model, kNMax))
                                                        : pairing_weights(model, kNMax, clicks);
  const Eigen::MatrixXd p2 = h.h2 / double(h.n_pulses), p4 = h.h4m / double(h.n_pulses),
                        p6 = h.h6m / double(h.n_pulses);
  json rep;
  rep["weights"] = a.weights;
  rep["order"] = a.order;
  rep["eta_s"] = model.eta_s;
  rep["eta_i"] = model.eta_i;
  rep["eta_fitted"] = fit;
  rep["n_pulses"] = h.n_pulses;
  rep["r_tail"] = r.tail;
  double single = 0.0, multi = 0.0;
  for (size_t n = 1; n < r.r.size() && n < w.w1.size(); ++n) (n == 1 ? single : multi) += w.w1[n] * r.r[n];
  const double multipair = single + multi > 0.0 ? multi / (single + multi) : 0.0;
  rep["multipair_fraction"] = multipair;
  rep["multipair"] = multipair < 0.01 ? "negligible" : "significant";
  const Eigen::MatrixXd truth = s.jt.jti();
  Eigen::MatrixXd p1;
  try {
    const auto res = run.stage("correct", [&] {
      return correct_p1(p2, p4, &p6, w, r,
                        a.order == "six" ? CorrectionOrder::six_fold : CorrectionOrder::four_fold);
    });
    p1 = res.p1_estimate;
    rep["alpha_opt"] = res.alpha_opt;
    rep["beta_opt"] = res.beta_opt ? json(*res.beta_opt) : json(nullptr);
    rep["condition"] = res.condition;
    rep["clipped_fraction"] = res.clipped_fraction;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::no_multipair) throw;
    p1 = p2 / w.w1[1];
    rep["multipair"] = "negligible";
    rep["alpha_opt"] = 0.0;
  }
  if (p2.sum() > 0.0) {
    rep["purity_bound_raw"] = purity_bound(p2);
    rep["fidelity_raw"] = fidelity(p2, truth);
  }
  if (p1.sum() > 0.0) {
    rep["purity_bound_corrected"] = purity_bound(p1);
    rep["fidelity_corrected"] = fidelity(p1, truth);
  }
  rep["purity_bound_truth"] = purity_bound(truth);
  run.write("p1_corrected.csv", [&](std::ostream& os) { write_histogram_csv(os, p1, h.grid); });
  run.summary() = rep;
  run.write_json("correction.json", rep);
}

Points read_points_file(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), ErrorKind::config, "cannot open " + path);
  return read_points(f);
}

void stats_cmd(Run& run, const std::string& xs, const std::string& ys, int n_perm, const std::vector<int>& sizes,
               uint64_t seed, unsigned workers) {
  const auto x = read_points_file(xs), y = read_points_file(ys);
  const auto r = run.stage("test", [&] { return permutation_test(x, y, n_perm, seed, workers); });
  json j = {{"d2", r.d2},
            {"p_value", r.p_value},
            {"n_permutations", r.n_permutations},
            {"sample_sizes", {r.sample_sizes.first, r.sample_sizes.second}},
            {"reject_at_1pct", r.p_value < 0.01}};
  if (!sizes.empty()) {
    const auto sw = run.stage("sweep", [&] { return sample_size_sweep(x, y, sizes, n_perm, seed); });
    run.write("stats_sweep.csv", [&](std::ostream& os) { write_sweep_csv(os, sw); });
  }
  run.summary() = j;
  run.write_json("stats.json", j);
}

void report_cmd(Run& run, const fs::path& dir) {
  json all = json::object();
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("manifest_", 0) == 0 && e.path().extension() == ".json" && name != run.manifest_name())
      files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    std::ifstream is(f);
    json m;
    try {
      m = json::parse(is);
    } catch (const json::exception& ex) {
      throw Error(ErrorKind::parse, f.string() + ": " + ex.what());
    }
    std::vector<std::string> missing;
    for (const auto& o : m.value("outputs", json::array()))
      if (!fs::exists(dir / o.get<std::string>())) missing.push_back(o.get<std::string>());
    m["missing_outputs"] = missing;
    all[m.value("command", f.stem().string())] = m;
    std::cout << m.value("command", "?") << ": " << m.value("outputs", json::array()).size() << " outputs";
    if (!missing.empty()) std::cout << ", " << missing.size() << " missing";
    std::cout << '\n';
    if (m.contains("summary")) std::cout << "  " << m["summary"].dump() << '\n';
  }
  run.summary() = {{"runs", files.size()}};
  run.write_json("report.json", all);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pulsed microresonator squeezing simulator"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals gl;
  app.add_option("--output-dir", gl.output_dir, "Output directory (default $SQZ_OUTPUT_DIR or sqz_out)");
  app.add_option("--seed", gl.seed, "Random seed")->default_val(0);
  app.add_option("--workers", gl.workers, "Worker threads, 0 = hardware")->default_val(0);
  app.set_version_flag("--version", std::string(kVersion));

  std::string config;
  auto* sim = app.add_subcommand("simulate", "Single point or preset sweeps");
  std::string sweep = "point";
  int points = 0;
  sim->add_option("--config", config, "Config file");
  sim->add_option("--sweep", sweep, "point, fig1, fig2, fig3, fig4, fig5 or fig9")
      ->check(CLI::IsMember({"point", "fig1", "fig2", "fig3", "fig4", "fig5", "fig9"}));
  sim->add_option("--points", points, "Sweep density override");

  auto* dec = app.add_subcommand("decompose", "Two-time moments, Schmidt modes and JTA");
  int grid_n = 50;
  double grid_dt = 80.0;
  dec->add_option("--config", config, "Config file");
  dec->add_option("--grid-n", grid_n, "Analysis grid points")->default_val(50);
  dec->add_option("--grid-dt", grid_dt, "Analysis grid spacing in ps")->default_val(80.0);

  auto* syn = app.add_subcommand("synth", "Synthesize a time-tag stream");
  int64_t pulses = 100000;
  std::string clicks = "one_per_pulse";
  bool earliest = false;
  syn->add_option("--config", config, "Config file");
  syn->add_option("--pulses", pulses, "Number of pump pulses")->default_val(100000);
  syn->add_option("--clicks", clicks, "one_per_pulse or one_per_bin")
      ->check(CLI::IsMember({"one_per_pulse", "one_per_bin"}));
  syn->add_flag("--earliest-click", earliest, "Earliest photon in a port clicks");

  auto* cor = app.add_subcommand("correct", "Multi-pair correction of coincidence data");
  CorrectArgs ca;
  cor->add_option("--config", config, "Config file (state and detection model)");
  cor->add_option("--events", ca.events, "Time-tag CSV");
  cor->add_option("--h2", ca.h2, "Two-fold histogram CSV");
  cor->add_option("--h4m", ca.h4m, "Four-fold marginal histogram CSV");
  cor->add_option("--h6m", ca.h6m, "Six-fold marginal histogram CSV");
  cor->add_option("--pulses", ca.pulses, "Pulses behind the histogram files");
  cor->add_option("--order", ca.order, "four or six")->check(CLI::IsMember({"four", "six"}));
  cor->add_option("--weights", ca.weights, "pairing or threshold")->check(CLI::IsMember({"pairing", "threshold"}));
  cor->add_option("--clicks", ca.clicks, "one_per_pulse or one_per_bin")
      ->check(CLI::IsMember({"one_per_pulse", "one_per_bin"}));
  cor->add_flag("--fit-eta", ca.fit_eta, "Fit port efficiencies from singles");

  auto* sta = app.add_subcommand("stats", "Energy-distance two-sample test");
  std::string xs, ys;
  int n_perm = 1000;
  std::vector<int> sizes;
  sta->add_option("--x", xs, "First sample CSV")->required();
  sta->add_option("--y", ys, "Second sample CSV")->required();
  sta->add_option("--permutations", n_perm, "Permutations")->default_val(1000);
  sta->add_option("--sweep", sizes, "Sample sizes for a p-value sweep")->delimiter(',');

  auto* rep = app.add_subcommand("report", "Summarize manifests in the output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const fs::path dir = gl.dir();
    const std::string name = app.get_subcommands().front()->get_name();
    Run run(name, dir, gl.seed);
    const bool has_config = name != "stats" && name != "report";
    RunConfig cfg = has_config ? load(config) : RunConfig{};
    if (has_config) run.manifest()["config"] = to_json(cfg);
    if (*sim) {
      run.manifest()["sweep"] = sweep;
      if (sweep == "point") simulate_point(run, cfg, gl.workers);
      else if (sweep == "fig1") simulate_fig1(run, cfg, points, gl.workers);
      else if (sweep == "fig2") simulate_fig2(run, cfg, points, gl.workers);
      else if (sweep == "fig3") simulate_fig3(run, cfg, points, gl.workers);
      else if (sweep == "fig4") simulate_fig4(run, cfg, points, gl.workers);
      else if (sweep == "fig5") simulate_fig5(run, cfg, gl.workers);
      else simulate_fig9(run, cfg, points, gl.workers);
    } else if (*dec) {
      decompose_cmd(run, cfg, grid_n, grid_dt, gl.workers);
    } else if (*syn) {
      synth_cmd(run, cfg, pulses, gl.seed, clicks, earliest, gl.workers);
    } else if (*cor) {
      correct_cmd(run, cfg, ca, gl.workers);
    } else if (*sta) {
      stats_cmd(run, xs, ys, n_perm, sizes, gl.seed, gl.workers);
    } else if (*rep) {
      report_cmd(run, dir);
    }
    run.finish();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
