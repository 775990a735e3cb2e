#ifndef SQZ_MODEL_HPP
#define SQZ_MODEL_HPP

#include <cmath>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "sqz/error.hpp"

namespace sqz {

namespace phys {
inline constexpr double hbar = 1.054571817e-34;  // J s
inline constexpr double c = 299792458.0;         // m/s
inline constexpr double pi = std::numbers::pi;
}  // namespace phys

// Rates in 1/ps, frequencies in rad/ps.
struct ResonatorParams {
  double gamma_e = 0.0;
  double gamma_i = 0.0;
  double lambda_nl = 0.0;
  double delta_p = 0.0;
  double d_int = 0.0;
  int fsr_count_m = 0;

  double gamma_tot() const { return gamma_e + gamma_i; }
  double escape_efficiency() const { return gamma_e / gamma_tot(); }
  double delta_omega_d() const {
    return 4.0 * phys::pi * d_int * static_cast<double>(fsr_count_m) *
           static_cast<double>(fsr_count_m);
  }

  void validate() const {
    require(std::isfinite(gamma_e) && gamma_e > 0.0, ErrorKind::invalid_parameter,
            "gamma_e must be positive");
    require(std::isfinite(gamma_i) && gamma_i >= 0.0, ErrorKind::invalid_parameter,
            "gamma_i must be non-negative");
    require(std::isfinite(lambda_nl), ErrorKind::invalid_parameter, "lambda_nl not finite");
    require(std::isfinite(delta_p), ErrorKind::invalid_parameter, "delta_p not finite");
    require(std::isfinite(d_int), ErrorKind::invalid_parameter, "d_int not finite");
    require(fsr_count_m >= 0, ErrorKind::invalid_parameter, "fsr_count_m must be >= 0");
  }

  ResonatorParams with_detuning(double dp) const {
    ResonatorParams p = *this;
    p.delta_p = dp;
    return p;
  }
};

// Carrier angular frequency in rad/ps for a vacuum wavelength in metres.
inline double omega_from_wavelength(double wavelength_m) {
  require(wavelength_m > 0.0, ErrorKind::invalid_parameter, "wavelength must be positive");
  return 2.0 * phys::pi * phys::c / wavelength_m * 1e-12;
}

struct PumpPulse {
  double avg_power = 0.0;        // W
  double rep_rate = 0.0;         // Hz
  double duration_T = 0.0;       // ps
  double carrier_omega_p = 0.0;  // rad/ps

  double energy() const { return avg_power / rep_rate; }  // J
  double energy_pj() const { return energy() * 1e12; }

  // Peak photon flux of the top-hat drive, photons/ps.
  double photon_flux() const {
    return energy() / (duration_T * phys::hbar * carrier_omega_p * 1e12);
  }
  double drive_amplitude() const { return std::sqrt(photon_flux()); }

  void validate() const {
    require(avg_power >= 0.0 && std::isfinite(avg_power), ErrorKind::invalid_parameter,
            "avg_power must be non-negative");
    require(rep_rate > 0.0, ErrorKind::invalid_parameter, "rep_rate must be positive");
    require(duration_T > 0.0, ErrorKind::invalid_parameter, "duration_T must be positive");
    require(carrier_omega_p > 0.0, ErrorKind::invalid_parameter,
            "carrier_omega_p must be positive");
  }

  static PumpPulse from_energy(double energy_pj, double duration_ps, double rep_rate_hz,
                               double omega_p) {
    return PumpPulse{energy_pj * 1e-12 * rep_rate_hz, rep_rate_hz, duration_ps, omega_p};
  }
};

struct TimeGrid {
  double t_start = 0.0;
  double dt = 1.0;
  int n_points = 2;

  double time(int k) const { return t_start + dt * static_cast<double>(k); }
  double t_end() const { return time(n_points - 1); }
  std::vector<double> times() const {
    std::vector<double> t(static_cast<size_t>(n_points));
    for (int k = 0; k < n_points; ++k) t[static_cast<size_t>(k)] = time(k);
    return t;
  }

  void validate() const {
    require(dt > 0.0 && std::isfinite(dt), ErrorKind::invalid_parameter, "grid dt must be > 0");
    require(n_points >= 2, ErrorKind::invalid_parameter, "grid needs at least 2 points");
    require(std::isfinite(t_start), ErrorKind::invalid_parameter, "grid t_start not finite");
  }

  bool operator==(const TimeGrid& o) const {
    return n_points == o.n_points && std::abs(dt - o.dt) <= 1e-12 * dt &&
           std::abs(t_start - o.t_start) <= 1e-9 * std::max(1.0, dt);
  }
};

struct DetectionModel {
  std::vector<double> eta_s;
  std::vector<double> eta_i;

  double total_s() const { return std::accumulate(eta_s.begin(), eta_s.end(), 0.0); }
  double total_i() const { return std::accumulate(eta_i.begin(), eta_i.end(), 0.0); }

  void validate() const {
    require(!eta_s.empty() && !eta_i.empty(), ErrorKind::invalid_parameter,
            "detection model needs at least one port per species");
    for (double e : eta_s)
      require(e >= 0.0 && e <= 1.0, ErrorKind::invalid_parameter, "eta_s outside [0,1]");
    for (double e : eta_i)
      require(e >= 0.0 && e <= 1.0, ErrorKind::invalid_parameter, "eta_i outside [0,1]");
    require(total_s() <= 1.0 + 1e-12 && total_i() <= 1.0 + 1e-12,
            ErrorKind::invalid_parameter, "port efficiencies per species sum above 1");
  }
};

// Lambda = hbar omega^2 c n2 / (n0^2 V), in 1/s.
inline double compute_lambda(double n2, double v_eff, double n0, double omega_p) {
  require(n2 > 0.0 && v_eff > 0.0 && n0 > 0.0 && omega_p > 0.0, ErrorKind::invalid_parameter,
          "compute_lambda inputs must be positive");
  return phys::hbar * omega_p * omega_p * phys::c * n2 / (n0 * n0 * v_eff);
}

struct CouplingRates {
  double gamma_e;
  double gamma_i;
};

inline CouplingRates from_quality_factors(double q_loaded, double q_intrinsic,
                                          double omega_p) {
  require(q_loaded > 0.0 && omega_p > 0.0, ErrorKind::invalid_parameter,
          "quality factors and omega_p must be positive");
  require(q_intrinsic >= q_loaded, ErrorKind::invalid_parameter,
          "intrinsic Q must be at least the loaded Q");
  const double g_tot = omega_p / q_loaded;
  const double g_i = std::isinf(q_intrinsic) ? 0.0 : omega_p / q_intrinsic;
  return {g_tot - g_i, g_i};
}

namespace device {
inline constexpr double wavelength_pump = 1544.53e-9;  // m
inline constexpr double rep_rate = 1e5;                // Hz
inline constexpr double tau_loaded = 660.0;            // ps
inline constexpr double tau_intrinsic = 2730.0;        // ps
inline constexpr double lambda_nl = 1.4e-12;           // rad/ps
inline constexpr double d_int = -1.38e-6;              // 1/ps
inline constexpr int fsr_m = 5;

inline ResonatorParams resonator(double delta_p = 0.0) {
  ResonatorParams p;
  p.gamma_i = 1.0 / tau_intrinsic;
  p.gamma_e = 1.0 / tau_loaded - p.gamma_i;
  p.lambda_nl = lambda_nl;
  p.delta_p = delta_p;
  p.d_int = d_int;
  p.fsr_count_m = fsr_m;
  return p;
}

inline PumpPulse pulse(double energy_pj, double duration_ps = 800.0) {
  return PumpPulse::from_energy(energy_pj, duration_ps, rep_rate,
                                omega_from_wavelength(wavelength_pump));
}

// Grid from pulse start through n_lifetimes of ring-down.
inline TimeGrid flux_grid(double duration_ps, double dt = 10.0, double n_lifetimes = 6.0) {
  const int n = static_cast<int>(std::ceil((duration_ps + n_lifetimes * tau_loaded) / dt)) + 1;
  return TimeGrid{0.0, dt, n};
}

inline TimeGrid jta_grid() { return TimeGrid{0.0, 80.0, 50}; }
}  // namespace device

}  // namespace sqz

#endif
