#include <gtest/gtest.h>

#include "sqz/fockoracle.hpp"
#include "sqz/multiphoton.hpp"
#include "sqz/schmidt.hpp"

using namespace sqz;

namespace {

OdeOptions tight() {
  OdeOptions o;
  o.rtol = 1e-11;
  o.atol = 1e-16;
  return o;
}

}  // namespace

TEST(FockOracle, NoInteractionKeepsVacuum) {
  auto p = device::resonator();
  p.lambda_nl = 0.0;
  const auto tr = solve_pump(p, device::pulse(40.0), device::flux_grid(800.0, 100.0));
  const auto ev = evolve_fock(tr, p, 3);
  for (const auto& r : ev.rho) {
    EXPECT_EQ(std::abs(r(0, 0) - 1.0), 0.0);
    EXPECT_EQ(r.norm(), 1.0);
  }
}

TEST(FockOracle, AgreesWithMomentsAtLowGain) {
  const auto p = device::resonator();
  const auto tr = solve_pump(p, device::pulse(40.0), device::flux_grid(800.0, 50.0));
  const auto st = evolve_moments(tr, p, tight());
  const auto ev = evolve_fock(tr, p, 6);
  const FockSpace fs(6);
  double peak = 0.0;
  for (double v : st.n_s) peak = std::max(peak, v);
  for (size_t k = 0; k < ev.rho.size(); ++k) {
    const auto& r = ev.rho[k];
    EXPECT_NEAR(r.trace().real(), 1.0, 1e-8);
    EXPECT_LT((r - r.adjoint()).norm(), 1e-12);
    EXPECT_NEAR(fs.mean_ns(r), fs.mean_ni(r), 1e-12);
    if (st.n_s[k] < 1e-6 * peak) continue;
    EXPECT_NEAR(fs.mean_ns(r) / st.n_s[k], 1.0, 1e-3);
    EXPECT_NEAR(std::abs(fs.pair_coherence(r)) / std::abs(st.m_si[k]), 1.0, 1e-3);
  }
}

TEST(FockOracle, PositiveSemidefinite) {
  const auto p = device::resonator();
  const auto tr = solve_pump(p, device::pulse(40.0), device::flux_grid(800.0, 200.0));
  const auto ev = evolve_fock(tr, p, 4);
  for (const auto& r : ev.rho) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(r);
    EXPECT_GT(es.eigenvalues().minCoeff(), -1e-9);
  }
}

TEST(FockOracle, TruncationError) {
  const auto p = device::resonator();
  const auto tr = solve_pump(p, device::pulse(1000.0), device::flux_grid(800.0, 100.0));
  try {
    evolve_fock(tr, p, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::truncation);
  }
}

TEST(FockOracle, SqueezedVacuumDistributionAndThermalMarginal) {
  const double xi = 0.3;
  const auto st = two_mode_squeezed_vacuum(xi, 40);
  const auto r = pair_number_distribution(st);
  for (int n = 0; n < 10; ++n)
    EXPECT_NEAR(r[size_t(n)], std::pow(std::tanh(xi), 2 * n) / std::pow(std::cosh(xi), 2), 1e-6);
  EXPECT_NEAR(signal_g2(st), 2.0, 1e-3);
  const auto vac = two_mode_squeezed_vacuum(0.0, 4);
  EXPECT_DOUBLE_EQ(pair_number_distribution(vac)[0], 1.0);
}

TEST(FockOracle, SignalMarginalIsThermal) {
  const auto p = device::resonator();
  const auto tr = solve_pump(p, device::pulse(40.0), device::flux_grid(800.0, 100.0));
  const auto ev = evolve_fock(tr, p, 6);
  for (int k : {6, 9, 14}) EXPECT_NEAR(signal_g2(fock_state_at(ev, k)), 2.0, 1e-3) << k;
}

TEST(FockOracle, TwoTimeMatchesRegressionOnCoarseGrid) {
  const auto p = device::resonator();
  const auto tr = solve_pump(p, device::pulse(40.0), device::flux_grid(800.0, 50.0));
  const TimeGrid g{0.0, 400.0, 10};
  const auto ref = fock_two_time(tr, p, g, 5, tight());
  const auto tt = two_time_correlators(tr, p, g, tight());
  const double scale_m = tt.m_matrix.cwiseAbs().maxCoeff();
  const double scale_c = tt.c_matrix.cwiseAbs().maxCoeff();
  for (int q = 0; q < g.n_points; ++q)
    for (int k = 0; k < g.n_points; ++k) {
      if (std::abs(tt.m_matrix(q, k)) > 1e-3 * scale_m) {
        EXPECT_LT(std::abs(ref.m_matrix(q, k) - tt.m_matrix(q, k)) / std::abs(tt.m_matrix(q, k)), 1e-2)
            << q << "," << k;
      }
      if (std::abs(tt.c_matrix(q, k)) > 1e-3 * scale_c) {
        EXPECT_LT(std::abs(ref.c_matrix(q, k) - tt.c_matrix(q, k)) / std::abs(tt.c_matrix(q, k)), 1e-2)
            << q << "," << k;
      }
    }
}

TEST(FockOracle, PairNumbersMatchSchmidtSpectrum) {
  // long ring-down so that no photons remain in the cavity at the end
  const auto p = device::resonator();
  const auto tr = solve_pump(p, device::pulse(40.0), device::flux_grid(800.0, 50.0, 10.0));
  const auto ev = evolve_fock(tr, p, 6, 5);
  const auto r_oracle = pair_number_distribution(ev);
  double s = 0.0;
  for (double v : r_oracle) s += v;
  EXPECT_NEAR(s, 1.0, 1e-8);
  const auto tt = two_time_correlators(tr, p, TimeGrid{0.0, 40.0, 186}, tight());
  const auto d = decompose(tt);
  EXPECT_NEAR(d.mean_pairs() / (p.gamma_tot() * evolve_moments(tr, p, tight()).integral_n_s), 1.0,
              1e-3);
  const auto r = rn_from_schmidt(d, 5);
  for (int n = 0; n <= 3; ++n)
    EXPECT_NEAR(r.r[size_t(n)] / r_oracle[size_t(n)], 1.0, 1e-3) << "n=" << n;
}
