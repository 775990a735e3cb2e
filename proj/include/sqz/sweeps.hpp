#ifndef SQZ_SWEEPS_HPP
#define SQZ_SWEEPS_HPP

#include <optional>
#include <string>
#include <vector>

#include "sqz/observables.hpp"
#include "sqz/parallel.hpp"
#include "sqz/schmidt.hpp"

namespace sqz {

enum class DetuningMode { zero, optimal };

inline const char* to_string(DetuningMode m) { return m == DetuningMode::zero ? "zero" : "optimal"; }

struct SweepOptions {
  double duration_ps = 800.0;
  double n_cap = 10.0;          // optimal-detuning branch stops above this many photons per pulse
  double search_lo = -1.0;      // detuning search, units of gamma_tot
  double search_hi = 8.0;
  int search_grid = 37;
  bool decompose = false;       // two-time moment and Schmidt metrics per point
  int grid_n = 50;
  double grid_dt = 80.0;
  unsigned workers = 0;
};

struct SchmidtMetrics {
  double g2 = 0.0;
  double schmidt_number = 0.0;
  double mean_pairs = 0.0;
  double xi_max = 0.0;
  double xi_out_max = 0.0;
  double captured = 0.0;
};

struct SweepResult {
  double energy_pj = 0.0;
  DetuningMode mode = DetuningMode::zero;
  double delta_p = 0.0;
  double n_s = 0.0;
  std::string status = "ok";  // ok, capped, threshold, truncated
  std::optional<SchmidtMetrics> schmidt;
};

inline double resolve_detuning(const ResonatorParams& p, const PumpPulse& pulse, DetuningMode mode,
                               const SweepOptions& o) {
  if (mode == DetuningMode::zero) return 0.0;
  const double g = p.gamma_tot();
  return optimal_detuning(p, pulse, {o.search_lo * g, o.search_hi * g, o.search_grid}).delta_opt;
}

inline SchmidtMetrics schmidt_metrics(const ResonatorParams& p, const PumpPulse& pulse,
                                      const SweepOptions& o) {
  const auto tr = solve_pump(p, pulse, device::flux_grid(pulse.duration_T));
  const auto st = evolve_moments(tr, p);
  const auto ag = analysis_grid(st, o.grid_n, o.grid_dt);
  const auto d = decompose(two_time_correlators(tr, p, ag.grid, {}, 1));
  SchmidtMetrics m;
  m.g2 = g2_from_schmidt(d);
  m.schmidt_number = d.schmidt_number();
  m.mean_pairs = d.mean_pairs();
  m.xi_max = d.xi.size() == 0 ? 0.0 : d.xi[0];
  m.xi_out_max = output_squeezing(m.xi_max, p.escape_efficiency());
  m.captured = ag.captured;
  return m;
}

inline SweepResult sweep_point(const ResonatorParams& base, double energy_pj, DetuningMode mode,
                               const SweepOptions& o) {
  SweepResult r;
  r.energy_pj = energy_pj;
  r.mode = mode;
  const auto pulse = device::pulse(energy_pj, o.duration_ps);
  try {
    r.delta_p = resolve_detuning(base, pulse, mode, o);
    const auto p = base.with_detuning(r.delta_p);
    r.n_s = pulse_photon_number(p, pulse);
    if (mode == DetuningMode::optimal && r.n_s > o.n_cap) {
      r.status = "capped";
      return r;
    }
    if (o.decompose) r.schmidt = schmidt_metrics(p, pulse, o);
  } catch (const ThresholdExceeded&) {
    r.status = "threshold";
  }
  return r;
}

// Points after the first capped or above-threshold point are marked truncated.
inline std::vector<SweepResult> energy_sweep(const ResonatorParams& base,
                                             const std::vector<double>& energies_pj,
                                             DetuningMode mode, const SweepOptions& o) {
  std::vector<SweepResult> out(energies_pj.size());
  parallel_for(
      energies_pj.size(), [&](size_t k) { out[k] = sweep_point(base, energies_pj[k], mode, o); },
      o.workers);
  bool stop = false;
  for (auto& r : out) {
    if (stop) {
      r.status = "truncated";
      r.schmidt.reset();
    }
    stop = stop || r.status != "ok";
  }
  return out;
}

inline std::vector<double> log_space(double lo, double hi, int n) {
  require(lo > 0.0 && hi > lo && n >= 2, ErrorKind::invalid_parameter, "bad log range");
  std::vector<double> v(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k) v[size_t(k)] = lo * std::pow(hi / lo, double(k) / (n - 1));
  return v;
}

inline std::vector<double> lin_space(double lo, double hi, int n) {
  require(hi > lo && n >= 2, ErrorKind::invalid_parameter, "bad linear range");
  std::vector<double> v(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k) v[size_t(k)] = lo + (hi - lo) * k / (n - 1);
  return v;
}

// G1 ratio at three half-widths from zero lag (1.5 FWHM) over its zero-lag value.
inline double pedestal_ratio(const Curve& g1) {
  require(g1.y.size() >= 3 && g1.y.size() % 2 == 1, ErrorKind::shape, "G1 curve must be symmetric");
  const size_t c = (g1.y.size() - 1) / 2;
  const double y0 = g1.y[c];
  require(y0 > 0.0, ErrorKind::undefined, "G1 vanishes at zero lag");
  size_t h = 1;
  while (c + h < g1.y.size() - 1 && g1.y[c + h] >= 0.5 * y0) ++h;
  return g1.y[std::min(c + 3 * h, g1.y.size() - 1)] / y0;
}

inline size_t spectral_peak_count(const Curve& s, double prominence = 0.1) {
  double peak = 0.0;
  for (double y : s.y) peak = std::max(peak, y);
  return local_maxima(s.y, prominence * peak).size();
}

struct CoherencePoint {
  double energy_pj = 0.0;
  DetuningMode mode = DetuningMode::zero;
  double delta_p = 0.0;
  Curve g1;
  Curve spectrum;
  double pedestal = 0.0;
  size_t spectral_peaks = 0;
};

// Long-pulse coherence: analysis window spans the pulse and six lifetimes at grid_dt.
inline CoherencePoint coherence_point(const ResonatorParams& base, double energy_pj,
                                      DetuningMode mode, const SweepOptions& o) {
  CoherencePoint c;
  c.energy_pj = energy_pj;
  c.mode = mode;
  const auto pulse = device::pulse(energy_pj, o.duration_ps);
  c.delta_p = resolve_detuning(base, pulse, mode, o);
  const auto p = base.with_detuning(c.delta_p);
  const auto fg = device::flux_grid(o.duration_ps);
  const auto tr = solve_pump(p, pulse, fg);
  const int n = static_cast<int>(std::floor((fg.t_end() - fg.t_start) / o.grid_dt)) + 1;
  const auto ag = analysis_grid(evolve_moments(tr, p), n, o.grid_dt);
  const auto tt = two_time_correlators(tr, p, ag.grid, {}, 1);
  c.g1 = g1_tilde(tt, p);
  c.spectrum = single_photon_spectrum(tt, default_omega_grid(p.gamma_tot()));
  c.pedestal = pedestal_ratio(c.g1);
  c.spectral_peaks = spectral_peak_count(c.spectrum);
  return c;
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

inline LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, ErrorKind::invalid_parameter,
          "fit needs two or more points");
  const double n = double(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t k = 0; k < x.size(); ++k) {
    sx += x[k];
    sy += y[k];
    sxx += x[k] * x[k];
    sxy += x[k] * y[k];
  }
  LinearFit f;
  f.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  f.intercept = (sy - f.slope * sx) / n;
  double ss_res = 0, ss_tot = 0;
  for (size_t k = 0; k < x.size(); ++k) {
    const double e = y[k] - (f.slope * x[k] + f.intercept);
    ss_res += e * e;
    ss_tot += (y[k] - sy / n) * (y[k] - sy / n);
  }
  f.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return f;
}

}  // namespace sqz

#endif
