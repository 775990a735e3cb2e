#ifndef SQZ_MOMENTS_HPP
#define SQZ_MOMENTS_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <complex>
#include <ostream>
#include <string>
#include <vector>

#include "sqz/parallel.hpp"
#include "sqz/pump.hpp"

namespace sqz {

struct MomentState {
  TimeGrid grid;
  std::vector<double> n_s;
  std::vector<double> n_i;
  std::vector<cd> m_si;
  double integral_n_s = 0.0;  // cavity photons x ps over the grid span
  bool undepleted_ok = true;
  std::vector<std::string> warnings;
};

struct TwoTimeMoment {
  TimeGrid grid;
  Eigen::MatrixXcd m_matrix;  // gamma_tot <c_later c_earlier>, signal time = row
  Eigen::MatrixXcd c_matrix;  // <c_s^dag(t_q) c_s(t_p)>, C(t,t) = n_s(t)
};

// Coupling G(t) = Lambda cp^2 exp(i dw_D t) and XPM shift on signal/idler.
struct Coupling {
  const PumpTrajectory* traj;
  double lambda;
  double dw_d;

  void at(double t, cd& g, double& dx) const {
    const cd c = traj->cp_at(t);
    g = lambda * c * c * std::polar(1.0, dw_d * t);
    dx = 2.0 * lambda * std::norm(c);
  }
};

namespace detail {

struct MomentRhs {
  Coupling cpl;
  double gamma;
  bool with_propagator;

  void operator()(double t, const Eigen::VectorXd& y, Eigen::VectorXd& dy) const {
    cd g;
    double dx;
    cpl.at(t, g, dx);
    const double ns = y[0], ni = y[1];
    const cd m(y[2], y[3]);
    const double gen = 2.0 * std::imag(std::conj(g) * m);
    dy[0] = -gamma * ns + gen;
    dy[1] = -gamma * ni + gen;
    const cd dm = -cd(gamma, -2.0 * dx) * m + cd(0.0, 1.0) * g * (1.0 + ns + ni);
    dy[2] = dm.real();
    dy[3] = dm.imag();
    dy[4] = ns;
    if (!with_propagator) return;
    // d/dt (c_s, c_i^dag) = A (c_s, c_i^dag)
    const cd a11(-0.5 * gamma, dx), a12 = cd(0.0, 1.0) * g;
    const cd a21 = cd(0.0, -1.0) * std::conj(g), a22(-0.5 * gamma, -dx);
    for (int col = 0; col < 2; ++col) {
      const cd u1(y[5 + 4 * col], y[6 + 4 * col]);
      const cd u2(y[7 + 4 * col], y[8 + 4 * col]);
      const cd d1 = a11 * u1 + a12 * u2;
      const cd d2 = a21 * u1 + a22 * u2;
      dy[5 + 4 * col] = d1.real();
      dy[6 + 4 * col] = d1.imag();
      dy[7 + 4 * col] = d2.real();
      dy[8 + 4 * col] = d2.imag();
    }
  }
};

struct GridSolution {
  std::vector<double> n_s, n_i, integral;
  std::vector<cd> m;
  std::vector<Eigen::Matrix2cd> step_prop;  // U(t_{k+1}, t_k)
};

inline GridSolution integrate_on_grid(const PumpTrajectory& traj, const ResonatorParams& params,
                                      const TimeGrid& grid, bool with_propagator,
                                      OdeOptions opt) {
  params.validate();
  grid.validate();
  require(grid.t_end() <= traj.t_end() + 1e-9, ErrorKind::coverage,
          "analysis grid extends past the pump trajectory");
  const int n = grid.n_points;
  const int dim = with_propagator ? 13 : 5;
  MomentRhs rhs{Coupling{&traj, params.lambda_nl, params.delta_omega_d()}, params.gamma_tot(),
                with_propagator};
  auto solver = make_dopri5(rhs, opt);

  GridSolution out;
  out.n_s.assign(static_cast<size_t>(n), 0.0);
  out.n_i.assign(static_cast<size_t>(n), 0.0);
  out.integral.assign(static_cast<size_t>(n), 0.0);
  out.m.assign(static_cast<size_t>(n), cd{});
  if (with_propagator) out.step_prop.resize(static_cast<size_t>(n - 1));

  Eigen::VectorXd y = Eigen::VectorXd::Zero(dim);
  // vacuum before the pulse; grids starting after t=0 are integrated from 0
  double t = std::min(0.0, grid.t_start);
  const std::vector<double> breaks{0.0, traj.duration_T};
  auto advance = [&](double t1) {
    double tc = t;
    for (double b : breaks) {
      if (b > tc && b < t1) {
        solver.integrate(tc, b, y);
        tc = b;
      }
    }
    solver.integrate(tc, t1, y);
    t = t1;
  };
  auto guard = [&](double tt) {
    if (!std::isfinite(y[0]) || !std::isfinite(y[2]) || y[0] > 1e15)
      throw ThresholdExceeded(tt, "signal occupation diverged (OPO threshold) near t=" +
                                      std::to_string(tt) + " ps");
  };
  try {
    advance(grid.t_start);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::integration) throw ThresholdExceeded(t, e.what());
    throw;
  }
  const double integral0 = y[4];
  for (int k = 0; k < n; ++k) {
    if (k > 0) {
      if (with_propagator) {
        y.segment(5, 8).setZero();
        y[5] = 1.0;
        y[11] = 1.0;
      }
      try {
        advance(grid.time(k));
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::integration) throw ThresholdExceeded(t, e.what());
        throw;
      }
      guard(t);
      if (with_propagator) {
        Eigen::Matrix2cd u;
        u(0, 0) = cd(y[5], y[6]);
        u(1, 0) = cd(y[7], y[8]);
        u(0, 1) = cd(y[9], y[10]);
        u(1, 1) = cd(y[11], y[12]);
        out.step_prop[static_cast<size_t>(k - 1)] = u;
      }
    }
    out.n_s[static_cast<size_t>(k)] = y[0];
    out.n_i[static_cast<size_t>(k)] = y[1];
    out.m[static_cast<size_t>(k)] = cd(y[2], y[3]);
    out.integral[static_cast<size_t>(k)] = y[4] - integral0;
  }
  return out;
}

}  // namespace detail

inline MomentState evolve_moments(const PumpTrajectory& traj, const ResonatorParams& params,
                                  OdeOptions opt = {}) {
  auto sol = detail::integrate_on_grid(traj, params, traj.grid, false, opt);
  MomentState st;
  st.grid = traj.grid;
  st.n_s = std::move(sol.n_s);
  st.n_i = std::move(sol.n_i);
  st.m_si = std::move(sol.m);
  st.integral_n_s = sol.integral.back();
  double max_n = 0.0, max_p = 0.0;
  for (double v : st.n_s) max_n = std::max(max_n, v);
  for (const cd& c : traj.cp) max_p = std::max(max_p, std::norm(c));
  if (max_p > 0.0 && max_n > 0.01 * max_p) {
    st.undepleted_ok = false;
    st.warnings.push_back("signal occupation exceeds 1% of pump photons; undepleted-pump "
                          "approximation is questionable");
  }
  return st;
}

struct AnalysisGrid {
  TimeGrid grid;
  double captured = 0.0;  // fraction of the integral of n_s inside the window
};

// Window of n points at spacing dt; t_start is the earliest flux-grid time that maximises the
// captured fraction of the integral of n_s.
inline AnalysisGrid analysis_grid(const MomentState& st, int n = 50, double dt = 80.0) {
  const auto& g = st.grid;
  require(n >= 2 && dt > 0.0, ErrorKind::invalid_parameter, "analysis grid needs n >= 2, dt > 0");
  const double span = (n - 1) * dt;
  require(span <= g.t_end() - g.t_start + 1e-9, ErrorKind::coverage,
          "analysis window longer than the simulated span");
  std::vector<double> cum(st.n_s.size(), 0.0);
  for (size_t k = 1; k < cum.size(); ++k) cum[k] = cum[k - 1] + 0.5 * (st.n_s[k] + st.n_s[k - 1]) * g.dt;
  auto at = [&](double t) {
    const double x = std::clamp((t - g.t_start) / g.dt, 0.0, double(cum.size() - 1));
    const size_t k = std::min(static_cast<size_t>(x), cum.size() - 2);
    return cum[k] + (x - double(k)) * (cum[k + 1] - cum[k]);
  };
  const double total = cum.back();
  AnalysisGrid best{TimeGrid{g.t_start, dt, n}, 0.0};
  if (total <= 0.0) return best;
  for (int k = 0; k < g.n_points && g.time(k) + span <= g.t_end() + 1e-9; ++k) {
    const double f = (at(g.time(k) + span) - at(g.time(k))) / total;
    if (f > best.captured + 1e-12) best = {TimeGrid{g.time(k), dt, n}, f};
  }
  return best;
}

namespace detail {

inline TwoTimeMoment assemble_two_time(const GridSolution& sol, const TimeGrid& grid,
                                       double gamma, unsigned workers) {
  const int n = grid.n_points;
  TwoTimeMoment tt;
  tt.grid = grid;
  tt.m_matrix = Eigen::MatrixXcd::Zero(n, n);
  tt.c_matrix = Eigen::MatrixXcd::Zero(n, n);
  // Row q regresses from t_q forward; each task writes only entries it owns.
  parallel_for(
      static_cast<size_t>(n),
      [&](size_t qi) {
        const int q = static_cast<int>(qi);
        const double ns = sol.n_s[qi], ni = sol.n_i[qi];
        const cd m = sol.m[qi];
        tt.m_matrix(q, q) = gamma * m;
        tt.c_matrix(q, q) = ns;
        Eigen::Matrix2cd u = Eigen::Matrix2cd::Identity();
        for (int p = q + 1; p < n; ++p) {
          u = sol.step_prop[static_cast<size_t>(p - 1)] * u;
          // idler later: <c_i(t_p) c_s(t_q)>
          tt.m_matrix(q, p) = gamma * (std::conj(u(1, 0)) * ns + std::conj(u(1, 1)) * m);
          // signal later: <c_s(t_p) c_i(t_q)>
          tt.m_matrix(p, q) = gamma * (u(0, 0) * m + u(0, 1) * ni);
          tt.c_matrix(q, p) = u(0, 0) * ns + u(0, 1) * std::conj(m);
          tt.c_matrix(p, q) = std::conj(tt.c_matrix(q, p));
        }
      },
      workers);
  return tt;
}

}  // namespace detail

inline TwoTimeMoment two_time_correlators(const PumpTrajectory& traj,
                                          const ResonatorParams& params, const TimeGrid& grid,
                                          OdeOptions opt = {}, unsigned workers = 0) {
  auto sol = detail::integrate_on_grid(traj, params, grid, true, opt);
  return detail::assemble_two_time(sol, grid, params.gamma_tot(), workers);
}

// Variant that checks the analysis grid against an existing moment solution.
inline TwoTimeMoment two_time_correlators(const PumpTrajectory& traj,
                                          const ResonatorParams& params,
                                          const MomentState& state, const TimeGrid& grid,
                                          OdeOptions opt = {}, unsigned workers = 0) {
  require(state.grid == grid, ErrorKind::grid_mismatch,
          "moment state grid differs from the analysis grid");
  return two_time_correlators(traj, params, grid, opt, workers);
}

inline void write_matrix_csv(std::ostream& os, const Eigen::MatrixXcd& m, const TimeGrid& g,
                             const std::string& name) {
  os << "# " << name << " t_start=" << g.t_start << " dt=" << g.dt << " n=" << g.n_points
     << "\n";
  os << "q,p,re,im\n";
  os.precision(12);
  for (int q = 0; q < m.rows(); ++q)
    for (int p = 0; p < m.cols(); ++p)
      os << q << ',' << p << ',' << m(q, p).real() << ',' << m(q, p).imag() << '\n';
}

}  // namespace sqz

#endif
