#ifndef SQZ_OBSERVABLES_HPP
#define SQZ_OBSERVABLES_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "sqz/schmidt.hpp"

namespace sqz {

struct Curve {
  std::vector<double> x;
  std::vector<double> y;
};

struct ObservableSet {
  std::vector<double> flux;  // photons/ps in the bus waveguide
  double n_per_pulse = 0.0;
  double g2 = 0.0;
  Curve g1_tilde;
  Curve spectrum;
};

// Photons leave into the bus at gamma_e per intracavity photon.
inline std::vector<double> output_flux(const MomentState& st, const ResonatorParams& params) {
  std::vector<double> f(st.n_s.size());
  for (size_t k = 0; k < f.size(); ++k) f[k] = params.gamma_e * st.n_s[k];
  return f;
}

inline double n_per_pulse(const MomentState& st, const ResonatorParams& params) {
  return params.gamma_e * st.integral_n_s;
}

// Output photons per pulse for a configuration, on a grid that only needs to cover the ring-down.
inline double pulse_photon_number(const ResonatorParams& params, const PumpPulse& pulse,
                                  double n_lifetimes = 6.0) {
  const double tau = 1.0 / params.gamma_tot();
  const double span = pulse.duration_T + n_lifetimes * tau;
  const TimeGrid g{0.0, span / 40.0, 41};
  const auto tr = solve_pump(params, pulse, g);
  return n_per_pulse(evolve_moments(tr, params), params);
}

struct SearchRange {
  double lo;
  double hi;
  int n_grid = 25;
};

struct DetuningResult {
  double delta_opt = 0.0;
  double n_s = 0.0;
  int evaluations = 0;
};

// Maximise f on [lo, hi]: grid scan, then golden section inside the best cell.
inline DetuningResult maximize_scalar(const std::function<double(double)>& f,
                                      const SearchRange& r, double tol) {
  require(r.hi > r.lo && r.n_grid >= 3, ErrorKind::invalid_parameter, "bad search range");
  DetuningResult res;
  std::vector<double> xs(static_cast<size_t>(r.n_grid)), ys(xs.size());
  for (int k = 0; k < r.n_grid; ++k) {
    xs[size_t(k)] = r.lo + (r.hi - r.lo) * k / (r.n_grid - 1);
    ys[size_t(k)] = f(xs[size_t(k)]);
  }
  res.evaluations = r.n_grid;
  const auto best = static_cast<size_t>(std::max_element(ys.begin(), ys.end()) - ys.begin());
  if (best == 0 || best + 1 == xs.size())
    throw Error(ErrorKind::invalid_parameter,
                "maximum at the edge of the search range; widen the bracket");
  double a = xs[best - 1], b = xs[best + 1];
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = f(c), fd = f(d);
  res.evaluations += 2;
  while (b - a > tol) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = f(d);
    }
    ++res.evaluations;
  }
  res.delta_opt = 0.5 * (a + b);
  res.n_s = f(res.delta_opt);
  ++res.evaluations;
  return res;
}

inline DetuningResult optimal_detuning(const ResonatorParams& params, const PumpPulse& pulse,
                                       const SearchRange& range) {
  auto f = [&](double dp) { return pulse_photon_number(params.with_detuning(dp), pulse); };
  return maximize_scalar(f, range, params.gamma_tot() / 100.0);
}

inline double g2_from_schmidt(const SchmidtDecomposition& d) {
  bool any = false;
  for (double x : d.xi) any = any || x >= kXiFloor;
  require(any, ErrorKind::undefined, "g2 undefined: no squeezed mode");
  return 1.0 + 1.0 / d.schmidt_number();
}

// G(tau) = sum_t |C(t, t + tau)| dt for tau = k dt, k = -(N-1)..N-1.
inline Curve g1_tilde(const TwoTimeMoment& tt, double scale = 1.0) {
  const int n = tt.grid.n_points;
  Curve c;
  for (int k = -(n - 1); k <= n - 1; ++k) {
    double s = 0.0;
    for (int q = std::max(0, -k); q < n && q + k < n; ++q)
      s += std::abs(tt.c_matrix(q, q + k));
    c.x.push_back(k * tt.grid.dt);
    c.y.push_back(s * tt.grid.dt * scale);
  }
  return c;
}

// Output-field version, G(0) = photons per pulse.
inline Curve g1_tilde(const TwoTimeMoment& tt, const ResonatorParams& params) {
  return g1_tilde(tt, params.gamma_e);
}

inline std::vector<double> default_omega_grid(double gamma_tot, int n = 801, double span = 10.0) {
  std::vector<double> w(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k) w[size_t(k)] = gamma_tot * span * (2.0 * k / (n - 1) - 1.0);
  return w;
}

// S(w) = sum_qp C(q,p) exp(i w (t_p - t_q)), normalised to unit peak.
inline Curve single_photon_spectrum(const TwoTimeMoment& tt, const std::vector<double>& omega) {
  const int n = tt.grid.n_points;
  Curve c;
  c.x = omega;
  c.y.resize(omega.size());
  Eigen::VectorXcd v(n);
  for (size_t w = 0; w < omega.size(); ++w) {
    for (int k = 0; k < n; ++k) v[k] = std::polar(1.0, omega[w] * tt.grid.time(k));
    c.y[w] = std::max(0.0, (v.adjoint() * tt.c_matrix * v)(0, 0).real());
  }
  const double peak = *std::max_element(c.y.begin(), c.y.end());
  if (peak > 0.0)
    for (double& y : c.y) y /= peak;
  return c;
}

// Indices of local maxima whose topographic prominence is at least min_prominence.
inline std::vector<size_t> local_maxima(const std::vector<double>& y, double min_prominence) {
  std::vector<size_t> out;
  const size_t n = y.size();
  for (size_t i = 1; i + 1 < n; ++i) {
    if (!(y[i] > y[i - 1])) continue;
    size_t j = i;
    while (j + 1 < n && y[j + 1] == y[i]) ++j;
    if (j + 1 >= n || !(y[j + 1] < y[i])) continue;
    double left_min = y[i], right_min = y[i];
    for (size_t l = i; l-- > 0;) {
      if (y[l] > y[i]) break;
      left_min = std::min(left_min, y[l]);
    }
    for (size_t r = j + 1; r < n; ++r) {
      if (y[r] > y[i]) break;
      right_min = std::min(right_min, y[r]);
    }
    if (y[i] - std::max(left_min, right_min) >= min_prominence) out.push_back(i);
    i = j;
  }
  return out;
}

// <a^dag(t1) a^dag(t2) a(t2) a(t1)> of a zero-mean Gaussian field from its second moments.
inline double wick_fourth_moment(const TwoTimeMoment& tt, int q, int p,
                                 const Eigen::MatrixXcd* anomalous = nullptr) {
  const double nq = tt.c_matrix(q, q).real(), np = tt.c_matrix(p, p).real();
  double v = nq * np + std::norm(tt.c_matrix(q, p));
  if (anomalous) v += std::norm((*anomalous)(q, p));
  return v;
}

// |G1(t1,t2)| from the thermal-state relation G2 = n1 n2 + |G1|^2.
inline double g1_abs_from_g2(double g2_unnormalised, double n1, double n2) {
  return std::sqrt(std::max(0.0, g2_unnormalised - n1 * n2));
}

inline ObservableSet compute_observables(const MomentState& st, const TwoTimeMoment& tt,
                                         const SchmidtDecomposition& d,
                                         const ResonatorParams& params) {
  ObservableSet o;
  o.flux = output_flux(st, params);
  o.n_per_pulse = n_per_pulse(st, params);
  o.g2 = g2_from_schmidt(d);
  o.g1_tilde = g1_tilde(tt, params);
  o.spectrum = single_photon_spectrum(tt, default_omega_grid(params.gamma_tot()));
  return o;
}

}  // namespace sqz

#endif
