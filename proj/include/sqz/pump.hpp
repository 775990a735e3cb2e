#ifndef SQZ_PUMP_HPP
#define SQZ_PUMP_HPP

#include <complex>
#include <memory>
#include <ostream>
#include <vector>

#include "sqz/model.hpp"
#include "sqz/ode.hpp"

namespace sqz {

using cd = std::complex<double>;

// Intracavity pump in the frame rotating at the cold pump resonance. The
// drive enters as -i sqrt(2 gamma_e) beta exp(i delta_p t) on [0, T).
struct PumpTrajectory {
  TimeGrid grid;
  std::vector<cd> cp;
  std::vector<double> delta_spm;
  std::vector<double> delta_xpm;
  double lambda_nl = 0.0;
  double duration_T = 0.0;
  std::shared_ptr<const DenseSolution> dense;

  cd cp_at(double t) const {
    if (t <= 0.0 || !dense) return {0.0, 0.0};
    const double tt = std::min(t, dense->t_end());
    const Eigen::VectorXd y = (*dense)(tt);
    return {y[0], y[1]};
  }
  double t_end() const { return dense ? dense->t_end() : 0.0; }
};

namespace detail {
struct PumpRhs {
  double half_gamma, lambda, drive, delta_p;
  bool driven;
  void operator()(double t, const Eigen::VectorXd& y, Eigen::VectorXd& dy) const {
    const cd c(y[0], y[1]);
    cd d = cd(-half_gamma, lambda * std::norm(c)) * c;
    if (driven) d += cd(0.0, -drive) * std::polar(1.0, delta_p * t);
    dy[0] = d.real();
    dy[1] = d.imag();
  }
};
}  // namespace detail

inline PumpTrajectory solve_pump(const ResonatorParams& params, const PumpPulse& pulse,
                                 const TimeGrid& grid, OdeOptions opt = {}) {
  params.validate();
  pulse.validate();
  grid.validate();
  const double T = pulse.duration_T;
  const double g = params.gamma_tot();
  require(grid.t_start <= 0.0, ErrorKind::coverage, "grid must start at or before the pulse");
  require(grid.t_end() >= T + 5.0 / g - 1e-9, ErrorKind::coverage,
          "grid must cover the pulse plus 5 cavity lifetimes of ring-down");

  const double drive = std::sqrt(2.0 * params.gamma_e) * pulse.drive_amplitude();
  auto dense = std::make_shared<DenseSolution>();
  Eigen::VectorXd y = Eigen::VectorXd::Zero(2);
  {
    detail::PumpRhs rhs{0.5 * g, params.lambda_nl, drive, params.delta_p, true};
    auto solver = make_dopri5(rhs, opt);
    solver.integrate(0.0, T, y, dense.get());
  }
  {
    detail::PumpRhs rhs{0.5 * g, params.lambda_nl, drive, params.delta_p, false};
    auto solver = make_dopri5(rhs, opt);
    solver.integrate(T, grid.t_end(), y, dense.get());
  }

  PumpTrajectory tr;
  tr.grid = grid;
  tr.lambda_nl = params.lambda_nl;
  tr.duration_T = T;
  tr.dense = dense;
  const size_t n = static_cast<size_t>(grid.n_points);
  tr.cp.resize(n);
  tr.delta_spm.resize(n);
  tr.delta_xpm.resize(n);
  for (size_t k = 0; k < n; ++k) {
    tr.cp[k] = tr.cp_at(grid.time(static_cast<int>(k)));
    tr.delta_spm[k] = params.lambda_nl * std::norm(tr.cp[k]);
    tr.delta_xpm[k] = 2.0 * tr.delta_spm[k];
  }
  return tr;
}

// 2(w_p(t) - delta_p) - w_s(t) - w_i(t) with the cold resonances offset by dw_D.
inline std::vector<double> energy_mismatch(const PumpTrajectory& traj,
                                           const ResonatorParams& params) {
  std::vector<double> dw(traj.cp.size());
  for (size_t k = 0; k < dw.size(); ++k)
    dw[k] = 2.0 * traj.delta_xpm[k] - 2.0 * traj.delta_spm[k] - 2.0 * params.delta_p -
            params.delta_omega_d();
  return dw;
}

inline void write_pump_csv(std::ostream& os, const PumpTrajectory& traj,
                           const ResonatorParams& params) {
  const auto dw = energy_mismatch(traj, params);
  os << "t_ps,re_cp,im_cp,abs2_cp,delta_spm,delta_xpm,delta_omega\n";
  os.precision(12);
  for (size_t k = 0; k < traj.cp.size(); ++k)
    os << traj.grid.time(static_cast<int>(k)) << ',' << traj.cp[k].real() << ','
       << traj.cp[k].imag() << ',' << std::norm(traj.cp[k]) << ',' << traj.delta_spm[k] << ','
       << traj.delta_xpm[k] << ',' << dw[k] << '\n';
}

}  // namespace sqz

#endif
