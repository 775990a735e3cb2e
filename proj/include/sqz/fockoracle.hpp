#ifndef SQZ_FOCKORACLE_HPP
#define SQZ_FOCKORACLE_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <vector>

#include "sqz/moments.hpp"

namespace sqz {

struct FockState {
  int cutoff = 0;
  Eigen::MatrixXcd rho;  // basis index n_s * (cutoff + 1) + n_i
};

struct FockEvolution {
  int cutoff = 0;
  TimeGrid grid;
  std::vector<Eigen::MatrixXcd> rho;
  // Emitted signal photon count distribution (last entry lumps >= count_max),
  // empty when counting was not requested.
  std::vector<double> emitted;
};

class FockSpace {
 public:
  using Sp = Eigen::SparseMatrix<cd>;

  explicit FockSpace(int cutoff) : cutoff_(cutoff), d1_(cutoff + 1), dim_(d1_ * d1_) {
    require(cutoff >= 2, ErrorKind::invalid_parameter, "Fock cutoff must be >= 2");
    std::vector<Eigen::Triplet<cd>> ts, ti;
    for (int ns = 0; ns <= cutoff; ++ns)
      for (int ni = 0; ni <= cutoff; ++ni) {
        if (ns > 0) ts.emplace_back(index(ns - 1, ni), index(ns, ni), std::sqrt(double(ns)));
        if (ni > 0) ti.emplace_back(index(ns, ni - 1), index(ns, ni), std::sqrt(double(ni)));
      }
    as_.resize(dim_, dim_);
    as_.setFromTriplets(ts.begin(), ts.end());
    ai_.resize(dim_, dim_);
    ai_.setFromTriplets(ti.begin(), ti.end());
    asd_ = as_.adjoint();
    aid_ = ai_.adjoint();
    pair_ = as_ * ai_;
    paird_ = asd_ * aid_;
    num_ = asd_ * as_ + aid_ * ai_;
    ns_op_ = asd_ * as_;
  }

  int cutoff() const { return cutoff_; }
  int dim() const { return dim_; }
  int index(int ns, int ni) const { return ns * d1_ + ni; }
  const Sp& a_s() const { return as_; }
  const Sp& a_i() const { return ai_; }
  const Sp& a_s_dag() const { return asd_; }
  const Sp& a_i_dag() const { return aid_; }

  Eigen::MatrixXcd vacuum() const {
    Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(dim_, dim_);
    r(0, 0) = 1.0;
    return r;
  }

  // L(x) for H = -dx (n_s + n_i) - (g a_s^dag a_i^dag + g* a_s a_i), both modes damped at gamma.
  // With jump_s false the signal jump term is omitted (photon counting).
  void apply(const Eigen::MatrixXcd& x, cd g, double dx, double gamma, bool jump_s,
             Eigen::Ref<Eigen::MatrixXcd> out) const {
    // -i Heff x with Heff = -dx N - g P^dag - g* P - i gamma/2 N
    Eigen::MatrixXcd hx = -dx * (num_ * x) - g * (paird_ * x) - std::conj(g) * (pair_ * x);
    hx -= cd(0.0, 0.5 * gamma) * (num_ * x);
    Eigen::MatrixXcd xh = -dx * (x * num_) - std::conj(g) * (x * pair_) - g * (x * paird_);
    xh += cd(0.0, 0.5 * gamma) * (x * num_);
    out = cd(0.0, -1.0) * hx + cd(0.0, 1.0) * xh;
    out += gamma * (ai_ * x * aid_);
    if (jump_s) out += gamma * (as_ * x * asd_);
  }

  Eigen::MatrixXcd jump_s(const Eigen::MatrixXcd& x) const { return as_ * x * asd_; }

  double top_population(const Eigen::MatrixXcd& r) const {
    double p = 0.0;
    for (int ns = 0; ns <= cutoff_; ++ns)
      for (int ni = 0; ni <= cutoff_; ++ni)
        if (ns == cutoff_ || ni == cutoff_) p += r(index(ns, ni), index(ns, ni)).real();
    return p;
  }

  double mean_ns(const Eigen::MatrixXcd& r) const { return (ns_op_ * r).trace().real(); }
  double mean_ni(const Eigen::MatrixXcd& r) const {
    return ((aid_ * ai_) * r).trace().real();
  }
  cd pair_coherence(const Eigen::MatrixXcd& r) const { return (pair_ * r).trace(); }

 private:
  int cutoff_, d1_, dim_;
  Sp as_, ai_, asd_, aid_, pair_, paird_, num_, ns_op_;
};

namespace detail {

inline Eigen::Map<Eigen::MatrixXcd> as_matrix(Eigen::VectorXd& v, int dim, int block) {
  return Eigen::Map<Eigen::MatrixXcd>(reinterpret_cast<cd*>(v.data()) + size_t(block) * dim * dim,
                                      dim, dim);
}
inline Eigen::Map<const Eigen::MatrixXcd> as_matrix(const Eigen::VectorXd& v, int dim,
                                                    int block) {
  return Eigen::Map<const Eigen::MatrixXcd>(
      reinterpret_cast<const cd*>(v.data()) + size_t(block) * dim * dim, dim, dim);
}

// Independent operators evolved by the same Lindbladian (no counting).
struct LindbladRhs {
  const FockSpace* fs;
  Coupling cpl;
  double gamma;
  int blocks;
  void operator()(double t, const Eigen::VectorXd& y, Eigen::VectorXd& dy) const {
    cd g;
    double dx;
    cpl.at(t, g, dx);
    const int d = fs->dim();
    for (int b = 0; b < blocks; ++b) {
      Eigen::MatrixXcd x = as_matrix(y, d, b);
      fs->apply(x, g, dx, gamma, true, as_matrix(dy, d, b));
    }
  }
};

// Photon-count-resolved density matrices rho^(k), k = 0..kmax (kmax lumps the tail).
struct CountingRhs {
  const FockSpace* fs;
  Coupling cpl;
  double gamma;
  int kmax;
  void operator()(double t, const Eigen::VectorXd& y, Eigen::VectorXd& dy) const {
    cd g;
    double dx;
    cpl.at(t, g, dx);
    const int d = fs->dim();
    for (int k = 0; k <= kmax; ++k) {
      Eigen::MatrixXcd x = as_matrix(y, d, k);
      auto out = as_matrix(dy, d, k);
      fs->apply(x, g, dx, gamma, k == kmax, out);
      if (k > 0) out += gamma * fs->jump_s(as_matrix(y, d, k - 1));
    }
  }
};

}  // namespace detail

inline OdeOptions fock_default_options() {
  OdeOptions o;
  o.rtol = 1e-10;
  o.atol = 1e-15;
  return o;
}

// Evolves rho on traj.grid. count_max > 0 also tracks the emitted signal photon number.
inline FockEvolution evolve_fock(const PumpTrajectory& traj, const ResonatorParams& params,
                                 int cutoff, int count_max = 0,
                                 OdeOptions opt = fock_default_options()) {
  params.validate();
  const FockSpace fs(cutoff);
  const TimeGrid& grid = traj.grid;
  const int d = fs.dim();
  const int blocks = count_max > 0 ? count_max + 1 : 1;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(2 * d * d * blocks);
  detail::as_matrix(y, d, 0)(0, 0) = 1.0;
  const Coupling cpl{&traj, params.lambda_nl, params.delta_omega_d()};

  FockEvolution ev;
  ev.cutoff = cutoff;
  ev.grid = grid;
  ev.rho.reserve(static_cast<size_t>(grid.n_points));

  auto total_rho = [&]() {
    Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(d, d);
    for (int b = 0; b < blocks; ++b) r += detail::as_matrix(y, d, b);
    return r;
  };
  auto check = [&](const Eigen::MatrixXcd& r, double t) {
    const double top = fs.top_population(r);
    if (top > 1e-4)
      throw Error(ErrorKind::truncation,
                  "Fock cutoff " + std::to_string(cutoff) + " saturated (top-level population " +
                      std::to_string(top) + " at t=" + std::to_string(t) +
                      " ps); raise the cutoff");
  };

  auto run = [&](auto rhs) {
    auto solver = make_dopri5(rhs, opt);
    double t = std::min(0.0, grid.t_start);
    auto advance = [&](double t1) {
      for (double b : {0.0, traj.duration_T})
        if (b > t && b < t1) {
          solver.integrate(t, b, y);
          t = b;
        }
      solver.integrate(t, t1, y);
      t = t1;
    };
    for (int k = 0; k < grid.n_points; ++k) {
      advance(grid.time(k));
      Eigen::MatrixXcd r = total_rho();
      check(r, t);
      ev.rho.push_back(std::move(r));
    }
  };
  if (count_max > 0)
    run(detail::CountingRhs{&fs, cpl, params.gamma_tot(), count_max});
  else
    run(detail::LindbladRhs{&fs, cpl, params.gamma_tot(), 1});

  if (count_max > 0) {
    // photons still in the cavity are emitted later without further generation
    ev.emitted.assign(static_cast<size_t>(count_max + 1), 0.0);
    for (int k = 0; k <= count_max; ++k) {
      const auto r = detail::as_matrix(y, d, k);
      for (int ns = 0; ns <= cutoff; ++ns) {
        double p = 0.0;
        for (int ni = 0; ni <= cutoff; ++ni) p += r(fs.index(ns, ni), fs.index(ns, ni)).real();
        ev.emitted[static_cast<size_t>(std::min(k + ns, count_max))] += p;
      }
    }
  }
  return ev;
}

inline FockState fock_state_at(const FockEvolution& ev, int k) {
  return FockState{ev.cutoff, ev.rho.at(static_cast<size_t>(k))};
}

// Distribution of the signal photon number from the joint number diagonal.
inline std::vector<double> pair_number_distribution(const FockState& st) {
  const int d1 = st.cutoff + 1;
  std::vector<double> r(static_cast<size_t>(d1), 0.0);
  for (int ns = 0; ns < d1; ++ns)
    for (int ni = 0; ni < d1; ++ni) r[static_cast<size_t>(ns)] += st.rho(ns * d1 + ni, ns * d1 + ni).real();
  return r;
}

// Pair-number distribution of the emitted light; requires counting in evolve_fock.
inline std::vector<double> pair_number_distribution(const FockEvolution& ev) {
  require(!ev.emitted.empty(), ErrorKind::invalid_parameter,
          "evolution was run without photon counting");
  return ev.emitted;
}

inline FockState two_mode_squeezed_vacuum(double xi, int cutoff) {
  const int d1 = cutoff + 1;
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(d1 * d1);
  const double th = std::tanh(xi);
  for (int n = 0; n <= cutoff; ++n) psi(n * d1 + n) = std::pow(th, n) / std::cosh(xi);
  return FockState{cutoff, psi * psi.adjoint()};
}

// Signal second-order coherence of a state, <a^dag a^dag a a>/<a^dag a>^2.
inline double signal_g2(const FockState& st) {
  const int d1 = st.cutoff + 1;
  double n1 = 0.0, n2 = 0.0;
  for (int ns = 0; ns < d1; ++ns)
    for (int ni = 0; ni < d1; ++ni) {
      const double p = st.rho(ns * d1 + ni, ns * d1 + ni).real();
      n1 += ns * p;
      n2 += ns * (ns - 1.0) * p;
    }
  require(n1 > 0.0, ErrorKind::undefined, "g2 undefined for vacuum");
  return n2 / (n1 * n1);
}

// Two-time correlators on an analysis grid by quantum regression on the
// truncated space; same conventions as two_time_correlators.
inline TwoTimeMoment fock_two_time(const PumpTrajectory& traj, const ResonatorParams& params,
                                   const TimeGrid& grid, int cutoff,
                                   OdeOptions opt = fock_default_options()) {
  const FockSpace fs(cutoff);
  const int d = fs.dim();
  const int n = grid.n_points;
  const double gamma = params.gamma_tot();
  const Coupling cpl{&traj, params.lambda_nl, params.delta_omega_d()};

  // rho on the analysis grid
  PumpTrajectory on_grid = traj;
  on_grid.grid = grid;
  const FockEvolution ev = evolve_fock(on_grid, params, cutoff, 0, opt);

  TwoTimeMoment tt;
  tt.grid = grid;
  tt.m_matrix = Eigen::MatrixXcd::Zero(n, n);
  tt.c_matrix = Eigen::MatrixXcd::Zero(n, n);
  const std::vector<double> breaks{0.0, traj.duration_T};
  for (int q = 0; q < n; ++q) {
    const Eigen::MatrixXcd& r = ev.rho[static_cast<size_t>(q)];
    tt.m_matrix(q, q) = gamma * fs.pair_coherence(r);
    tt.c_matrix(q, q) = fs.mean_ns(r);
    if (q == n - 1) break;
    Eigen::VectorXd y(2 * d * d * 3);
    detail::as_matrix(y, d, 0) = fs.a_s() * r;
    detail::as_matrix(y, d, 1) = fs.a_i() * r;
    detail::as_matrix(y, d, 2) = r * fs.a_s_dag();
    auto solver = make_dopri5(detail::LindbladRhs{&fs, cpl, gamma, 3}, opt);
    double t = grid.time(q);
    for (int p = q + 1; p < n; ++p) {
      const double t1 = grid.time(p);
      for (double b : breaks)
        if (b > t && b < t1) {
          solver.integrate(t, b, y);
          t = b;
        }
      solver.integrate(t, t1, y);
      t = t1;
      tt.m_matrix(q, p) = gamma * (fs.a_i() * detail::as_matrix(y, d, 0)).trace();
      tt.m_matrix(p, q) = gamma * (fs.a_s() * detail::as_matrix(y, d, 1)).trace();
      tt.c_matrix(q, p) = (fs.a_s() * detail::as_matrix(y, d, 2)).trace();
      tt.c_matrix(p, q) = std::conj(tt.c_matrix(q, p));
    }
  }
  return tt;
}

}  // namespace sqz

#endif
