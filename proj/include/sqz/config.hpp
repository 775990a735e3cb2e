#ifndef SQZ_CONFIG_HPP
#define SQZ_CONFIG_HPP

#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sqz/model.hpp"

namespace sqz {

// Run configuration. Files use SI units; fields hold ps and rad/ps.
struct RunConfig {
  ResonatorParams params = device::resonator();
  PumpPulse pulse = device::pulse(1000.0);
  double wavelength_pump = device::wavelength_pump;  // m
  TimeGrid grid = device::flux_grid(800.0);
  DetectionModel detection{{0.1, 0.1}, {0.1, 0.1}};
  std::map<std::string, std::string> entries;  // as read

  void validate() const {
    params.validate();
    pulse.validate();
    grid.validate();
    detection.validate();
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline double parse_number(const std::string& key, const std::string& v) {
  size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || !std::isfinite(x))
    throw Error(ErrorKind::config, "value of " + key + " is not a finite number: '" + v + "'");
  return x;
}

inline std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number(key, trim(item)));
  if (out.empty()) throw Error(ErrorKind::config, key + " needs at least one value");
  return out;
}

}  // namespace detail

inline RunConfig parse_config(std::istream& is) {
  RunConfig c;
  std::string line;
  int lineno = 0;
  bool grid_n = false, grid_dt = false;
  double power = -1.0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::config, "line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    c.entries[key] = val;
    auto num = [&] { return detail::parse_number(key, val); };
    if (key == "gamma_e") c.params.gamma_e = num() * 1e-12;
    else if (key == "gamma_i") c.params.gamma_i = num() * 1e-12;
    else if (key == "lambda_nl") c.params.lambda_nl = num() * 1e-12;
    else if (key == "delta_p") c.params.delta_p = num() * 1e-12;
    else if (key == "d_int") c.params.d_int = num() * 1e-12;
    else if (key == "fsr_m") c.params.fsr_count_m = static_cast<int>(std::lround(num()));
    else if (key == "power") power = num();
    else if (key == "rep_rate") c.pulse.rep_rate = num();
    else if (key == "duration") c.pulse.duration_T = num() * 1e12;
    else if (key == "wavelength_pump") c.wavelength_pump = num();
    else if (key == "grid.dt") {
      c.grid.dt = num() * 1e12;
      grid_dt = true;
    } else if (key == "grid.n") {
      c.grid.n_points = static_cast<int>(std::lround(num()));
      grid_n = true;
    } else if (key == "grid.t0") c.grid.t_start = num() * 1e12;
    else if (key == "eta_s") c.detection.eta_s = detail::parse_list(key, val);
    else if (key == "eta_i") c.detection.eta_i = detail::parse_list(key, val);
    else throw Error(ErrorKind::config, "unknown config key '" + key + "'");
  }
  c.pulse.carrier_omega_p = omega_from_wavelength(c.wavelength_pump);
  if (power >= 0.0) c.pulse.avg_power = power;
  if (!grid_n) {
    const double dt = grid_dt ? c.grid.dt : 10.0;
    c.grid = device::flux_grid(c.pulse.duration_T, dt);
  }
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::config, std::string("invalid configuration: ") + e.what());
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), ErrorKind::config, "cannot open config " + path);
  return parse_config(f);
}

inline nlohmann::json to_json(const RunConfig& c) {
  return {{"gamma_e_per_ps", c.params.gamma_e},
          {"gamma_i_per_ps", c.params.gamma_i},
          {"lambda_nl_rad_per_ps", c.params.lambda_nl},
          {"delta_p_rad_per_ps", c.params.delta_p},
          {"d_int_per_ps", c.params.d_int},
          {"fsr_m", c.params.fsr_count_m},
          {"power_w", c.pulse.avg_power},
          {"rep_rate_hz", c.pulse.rep_rate},
          {"duration_ps", c.pulse.duration_T},
          {"wavelength_pump_m", c.wavelength_pump},
          {"grid", {{"t_start_ps", c.grid.t_start}, {"dt_ps", c.grid.dt}, {"n_points", c.grid.n_points}}},
          {"eta_s", c.detection.eta_s},
          {"eta_i", c.detection.eta_i}};
}

}  // namespace sqz

#endif
