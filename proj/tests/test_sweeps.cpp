#include <gtest/gtest.h>

#include "sqz/sweeps.hpp"

using namespace sqz;

TEST(Sweeps, Spacing) {
  const auto l = log_space(10.0, 1000.0, 3);
  EXPECT_DOUBLE_EQ(l[0], 10.0);
  EXPECT_NEAR(l[1], 100.0, 1e-12);
  EXPECT_NEAR(l[2], 1000.0, 1e-10);
  EXPECT_EQ(lin_space(0.0, 1.0, 5)[3], 0.75);
  EXPECT_THROW(log_space(0.0, 1.0, 3), Error);
}

TEST(Sweeps, LinearFitExactLine) {
  const std::vector<double> x{1, 2, 3, 4}, y{3, 5, 7, 9};
  const auto f = linear_fit(x, y);
  EXPECT_NEAR(f.slope, 2.0, 1e-12);
  EXPECT_NEAR(f.intercept, 1.0, 1e-12);
  EXPECT_NEAR(f.r2, 1.0, 1e-12);
  EXPECT_LT(linear_fit(x, {1, -1, 1, -1}).r2, 0.5);
}

TEST(Sweeps, ZeroModeMatchesDirectEvaluation) {
  const auto p = device::resonator();
  SweepOptions o;
  o.decompose = true;
  const auto r = sweep_point(p, 300.0, DetuningMode::zero, o);
  EXPECT_EQ(r.status, "ok");
  EXPECT_EQ(r.delta_p, 0.0);
  EXPECT_DOUBLE_EQ(r.n_s, pulse_photon_number(p, device::pulse(300.0)));
  ASSERT_TRUE(r.schmidt.has_value());
  EXPECT_NEAR(r.schmidt->g2, 1.0 + 1.0 / r.schmidt->schmidt_number, 1e-12);
  EXPECT_GE(r.schmidt->captured, 0.99);
}

TEST(Sweeps, OptimalBranchIsCappedThenTruncated) {
  const auto p = device::resonator();
  SweepOptions o;
  o.n_cap = 1.0;
  const auto rs = energy_sweep(p, {20.0, 100.0, 400.0, 800.0}, DetuningMode::optimal, o);
  EXPECT_EQ(rs[0].status, "ok");
  EXPECT_EQ(rs[1].status, "ok");
  EXPECT_EQ(rs[2].status, "capped");
  EXPECT_EQ(rs[3].status, "truncated");
  EXPECT_GT(rs[1].delta_p, rs[0].delta_p);
  EXPECT_GE(rs[0].n_s, pulse_photon_number(p, device::pulse(20.0)));
}

TEST(Sweeps, PedestalRatio) {
  Curve c;
  for (int k = -10; k <= 10; ++k) {
    c.x.push_back(k);
    c.y.push_back(std::exp(-std::abs(k) * std::log(2.0) / 2.5));
  }
  // first lag below half maximum is 3, ratio read at 9 lags
  EXPECT_NEAR(pedestal_ratio(c), std::exp(-9.0 * std::log(2.0) / 2.5), 1e-12);
}

TEST(Sweeps, LongPulseCoherence) {
  SweepOptions o;
  o.duration_ps = 5000.0;
  const auto p = device::resonator();
  const auto lo = coherence_point(p, 40.0, DetuningMode::zero, o);
  const auto hi = coherence_point(p, 1200.0, DetuningMode::zero, o);
  EXPECT_GT(hi.pedestal, 2.0 * lo.pedestal);
  EXPECT_EQ(lo.spectral_peaks, 1u);
  EXPECT_GE(hi.spectral_peaks, 2u);
}
