#include <gtest/gtest.h>

#include <unsupported/Eigen/Polynomials>

#include "sqz/model.hpp"

using namespace sqz;

TEST(Model, DerivedRates) {
  const auto p = device::resonator();
  EXPECT_NEAR(1.0 / p.gamma_tot(), 660.0, 1e-9);
  EXPECT_NEAR(p.escape_efficiency(), 1.0 - 660.0 / 2730.0, 1e-12);
  EXPECT_GT(p.escape_efficiency(), 0.0);
  EXPECT_LE(p.escape_efficiency(), 1.0);
  EXPECT_DOUBLE_EQ(p.gamma_tot(), p.gamma_e + p.gamma_i);
  EXPECT_NEAR(p.delta_omega_d(), 4.0 * phys::pi * device::d_int * 25.0, 1e-18);
}

TEST(Model, ValidateRejectsBadRates) {
  auto p = device::resonator();
  p.gamma_e = 0.0;
  EXPECT_THROW(p.validate(), Error);
  p = device::resonator();
  p.gamma_i = -1e-4;
  EXPECT_THROW(p.validate(), Error);
}

TEST(Model, PulseEnergyIsPowerOverRate) {
  for (double pj : {1.0, 40.0, 1650.0}) {
    const auto pl = device::pulse(pj);
    EXPECT_NEAR(pl.energy(), pl.avg_power / pl.rep_rate, 0.0);
    EXPECT_NEAR(pl.energy_pj(), pj, 1e-12 * pj);
  }
  PumpPulse bad = device::pulse(10.0);
  bad.duration_T = 0.0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Model, DriveAmplitudeIsTopHatFlux) {
  const auto pl = device::pulse(1000.0, 800.0);
  const double photons = pl.energy() / (phys::hbar * pl.carrier_omega_p * 1e12);
  EXPECT_NEAR(pl.drive_amplitude() * pl.drive_amplitude() * pl.duration_T, photons, 1e-6 * photons);
}

TEST(Model, TimeGrid) {
  const TimeGrid g{-100.0, 20.0, 11};
  EXPECT_DOUBLE_EQ(g.t_end(), 100.0);
  EXPECT_EQ(g.times().size(), 11u);
  EXPECT_THROW((TimeGrid{0.0, 0.0, 5}.validate()), Error);
  EXPECT_THROW((TimeGrid{0.0, 1.0, 1}.validate()), Error);
  EXPECT_TRUE(device::jta_grid() == (TimeGrid{0.0, 80.0, 50}));
}

TEST(Model, DetectionModelValidation) {
  DetectionModel m{{0.3, 0.3}, {0.5}};
  EXPECT_NO_THROW(m.validate());
  EXPECT_DOUBLE_EQ(m.total_s(), 0.6);
  m.eta_s = {0.6, 0.6};
  EXPECT_THROW(m.validate(), Error);
  m.eta_s = {};
  EXPECT_THROW(m.validate(), Error);
}

TEST(Model, ComputeLambdaScaling) {
  const double w = omega_from_wavelength(device::wavelength_pump) * 1e12;
  const double base = compute_lambda(2.5e-19, 1e-15, 1.9, w);
  EXPECT_NEAR(compute_lambda(5.0e-19, 1e-15, 1.9, w), 2.0 * base, 1e-12 * base);
  EXPECT_NEAR(compute_lambda(2.5e-19, 2e-15, 1.9, w), 0.5 * base, 1e-12 * base);
  EXPECT_NEAR(base, phys::hbar * w * w * phys::c * 2.5e-19 / (1.9 * 1.9 * 1e-15), 1e-12 * base);
  EXPECT_THROW(compute_lambda(-1.0, 1e-15, 1.9, w), Error);
  EXPECT_THROW(compute_lambda(2.5e-19, 0.0, 1.9, w), Error);
}

TEST(Model, QualityFactors) {
  const double w = omega_from_wavelength(device::wavelength_pump);
  const auto r = from_quality_factors(8e5, 3e6, w);
  EXPECT_NEAR(1.0 / (r.gamma_e + r.gamma_i), 660.0, 0.02 * 660.0);
  EXPECT_NEAR(1.0 / r.gamma_i, 2730.0, 0.12 * 2730.0);
  EXPECT_NEAR(r.gamma_e / (r.gamma_e + r.gamma_i), 0.75, 0.02);
  const auto lossless = from_quality_factors(8e5, std::numeric_limits<double>::infinity(), w);
  EXPECT_DOUBLE_EQ(lossless.gamma_i, 0.0);
  EXPECT_THROW(from_quality_factors(8e5, 1e5, w), Error);
}

// Lowest CW pump power at which the steady-state signal gain reaches the
// cavity loss, scanning the pump detuning.
static double cw_threshold_w(const ResonatorParams& p, double omega_p) {
  const double g = p.gamma_tot(), L = p.lambda_nl, dw = p.delta_omega_d();
  auto margin = [&](double watts) {
    const double flux = watts / (phys::hbar * omega_p * 1e24);
    double best = -1e300;
    for (int k = 0; k <= 4000; ++k) {
      const double dp = g * (-10.0 + 20.0 * k / 4000.0);
      Eigen::Vector4d c(-2.0 * p.gamma_e * flux, dp * dp + 0.25 * g * g, -2.0 * dp * L, L * L);
      Eigen::PolynomialSolver<double, 3> solver(c);
      for (int r = 0; r < 3; ++r) {
        const auto x = solver.roots()[r];
        if (std::abs(x.imag()) > 1e-6 * std::abs(x) || x.real() <= 0.0) continue;
        const double n = x.real(), G = L * n, d = 2.0 * L * n - dp - 0.5 * dw;
        best = std::max(best, (G * G - d * d) / (0.25 * g * g));
      }
    }
    return best;
  };
  double lo = 1e-3, hi = 0.2;
  for (int i = 0; i < 30; ++i) {
    const double mid = 0.5 * (lo + hi);
    (margin(mid) > 1.0 ? hi : lo) = mid;
  }
  return hi;
}

TEST(Model, LambdaCalibratedToCwThreshold) {
  const double w = omega_from_wavelength(device::wavelength_pump);
  EXPECT_NEAR(cw_threshold_w(device::resonator(), w), 0.035, 0.0035);
}
