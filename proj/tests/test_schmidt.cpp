#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "sqz/observables.hpp"
#include "sqz/schmidt.hpp"

using namespace sqz;

namespace {

Eigen::MatrixXcd random_unitary(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXcd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = cd(g(rng), g(rng));
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(a);
  return qr.householderQ();
}

struct Device1650 {
  ResonatorParams p = device::resonator();
  PumpTrajectory tr = solve_pump(p, device::pulse(1650.0), device::flux_grid(800.0));
};

const Device1650& dev1650() {
  static const Device1650 d;
  return d;
}

}  // namespace

TEST(Schmidt, RankOne) {
  std::mt19937_64 rng(3);
  const TimeGrid g{0.0, 80.0, 20};
  const auto u = random_unitary(20, rng), v = random_unitary(20, rng);
  const double D = 0.004;
  const Eigen::MatrixXcd m = D * u.col(0) * v.col(0).adjoint();
  const auto d = decompose(m, g);
  EXPECT_NEAR(d.xi[0], 0.5 * std::asinh(2.0 * D * g.dt), 1e-12);
  for (int k = 1; k < d.n_modes(); ++k) EXPECT_LT(d.xi[k], kXiFloor);
  EXPECT_NEAR(d.schmidt_number(), 1.0, 1e-12);
  // separable JTI
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(jta(d).jti());
  EXPECT_LT(svd.singularValues()[1], 1e-10 * svd.singularValues()[0]);
}

TEST(Schmidt, ZeroMatrix) {
  const TimeGrid g{0.0, 80.0, 10};
  const auto d = decompose(Eigen::MatrixXcd::Zero(10, 10), g);
  for (double x : d.xi) EXPECT_EQ(x, 0.0);
  EXPECT_EQ(d.mean_pairs(), 0.0);
  try {
    d.schmidt_number();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::undefined);
  }
}

TEST(Schmidt, ShapeAndFiniteness) {
  const TimeGrid g{0.0, 80.0, 10};
  EXPECT_THROW(decompose(Eigen::MatrixXcd::Zero(9, 10), g), Error);
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(10, 10);
  m(2, 3) = cd(std::nan(""), 0.0);
  try {
    decompose(m, g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::numerical);
  }
}

TEST(Schmidt, ModesUnitaryAndSorted) {
  const auto& dv = dev1650();
  const auto d = decompose(two_time_correlators(dv.tr, dv.p, device::jta_grid()));
  const int n = d.n_modes();
  EXPECT_LT((d.p_s.adjoint() * d.p_s - Eigen::MatrixXcd::Identity(n, n)).norm(), 1e-8);
  EXPECT_LT((d.p_i.adjoint() * d.p_i - Eigen::MatrixXcd::Identity(n, n)).norm(), 1e-8);
  for (int k = 1; k < n; ++k) EXPECT_LE(d.xi[k], d.xi[k - 1]);
  EXPECT_GE(d.schmidt_number(), 1.0);
}

TEST(Schmidt, JtaMatchesDirectAssembly) {
  const auto& dv = dev1650();
  const auto d = decompose(two_time_correlators(dv.tr, dv.p, device::jta_grid()));
  const auto j = jta(d);
  const int n = d.n_modes();
  Eigen::MatrixXcd direct = Eigen::MatrixXcd::Zero(n, n);
  for (int q = 0; q < n; ++q)
    for (int p = 0; p < n; ++p)
      for (int l = 0; l < n; ++l)
        if (d.xi[l] >= kXiFloor)
          direct(q, p) += d.xi[l] / (2.0 * d.dt) * d.p_s(q, l) * std::conj(d.p_i(p, l));
  EXPECT_LT((direct - j.j_matrix).norm(), 1e-8 * j.j_matrix.norm());
  EXPECT_TRUE(j.j_matrix.allFinite());
  EXPECT_NEAR(j.jti().sum(), 1.0, 1e-12);
}

TEST(Schmidt, MeanPairsMatchesMoments) {
  // analysis window covering the whole ring-down of the flux grid
  const auto& dv = dev1650();
  const auto st = evolve_moments(dv.tr, dv.p);
  const auto d = decompose(two_time_correlators(dv.tr, dv.p, TimeGrid{0.0, 80.0, 60}));
  EXPECT_NEAR(d.mean_pairs() / (dv.p.gamma_tot() * st.integral_n_s), 1.0, 0.01);
}

TEST(Schmidt, GridRefinementStable) {
  const auto& dv = dev1650();
  const auto a = decompose(two_time_correlators(dv.tr, dv.p, TimeGrid{0.0, 80.0, 60}));
  const auto b = decompose(two_time_correlators(dv.tr, dv.p, TimeGrid{0.0, 40.0, 120}));
  EXPECT_NEAR(a.mean_pairs() / b.mean_pairs(), 1.0, 0.02);
  EXPECT_NEAR(a.schmidt_number() / b.schmidt_number(), 1.0, 0.02);
}

TEST(Schmidt, SmallGainLimit) {
  const TimeGrid g{0.0, 80.0, 8};
  std::mt19937_64 rng(5);
  const auto u = random_unitary(8, rng), v = random_unitary(8, rng);
  Eigen::VectorXd s(8);
  s << 6e-5, 3e-5, 1e-5, 5e-6, 1e-6, 5e-7, 1e-7, 1e-8;
  const auto d = decompose(u * s.cast<cd>().asDiagonal() * v.adjoint(), g);
  for (int k = 0; k < 8; ++k) {
    ASSERT_LT(2.0 * d.d_vals[k] * g.dt, 0.01);
    EXPECT_NEAR(d.xi[k] / (d.d_vals[k] * g.dt), 1.0, 1e-4);
  }
}

TEST(Schmidt, SchmidtNumberInvariances) {
  const auto& dv = dev1650();
  const auto tt = two_time_correlators(dv.tr, dv.p, device::jta_grid());
  const double k0 = decompose(tt).schmidt_number();
  EXPECT_NEAR(decompose(tt.m_matrix * std::polar(1.0, 1.234), tt.grid).schmidt_number(), k0, 1e-9);
  std::mt19937_64 rng(11);
  const auto u = random_unitary(tt.grid.n_points, rng), v = random_unitary(tt.grid.n_points, rng);
  EXPECT_NEAR(decompose(u * tt.m_matrix * v.transpose(), tt.grid).schmidt_number(), k0, 1e-9);
}

TEST(Schmidt, G2IdentityFromSqueezing) {
  const auto& dv = dev1650();
  const auto d = decompose(two_time_correlators(dv.tr, dv.p, device::jta_grid()));
  double s2 = 0.0, s4 = 0.0;
  for (double x : d.xi) {
    const double sh = std::sinh(x);
    s2 += sh * sh;
    s4 += sh * sh * sh * sh;
  }
  EXPECT_NEAR(1.0 + s4 / (s2 * s2), g2_from_schmidt(d), 1e-12);
  EXPECT_NEAR(d.purity(), 1.0 / d.schmidt_number(), 0.0);
}

TEST(Schmidt, PurityAtHighGain) {
  const auto& dv = dev1650();
  const auto d = decompose(two_time_correlators(dv.tr, dv.p, device::jta_grid()));
  EXPECT_NEAR(d.purity(), 0.75, 0.04);
  EXPECT_NEAR(purity_bound(jta(d).jti()), 0.75, 0.03);
  EXPECT_GT(purity_bound(jta(d).jti()), d.purity());
}

TEST(Schmidt, TwoLobesAlongDiagonal) {
  const auto& dv = dev1650();
  const auto j = jta(decompose(two_time_correlators(dv.tr, dv.p, device::jta_grid()))).jti();
  std::vector<double> diag;
  for (int q = 0; q < j.rows(); ++q) diag.push_back(j(q, q));
  EXPECT_EQ(local_maxima(diag, 0.05 * j.maxCoeff()).size(), 2u);
}

TEST(Schmidt, OutputSqueezing) {
  const double pe = device::resonator().escape_efficiency();
  EXPECT_EQ(output_squeezing(0.0, pe), 0.0);
  double prev = 0.0;
  for (double xi = 0.1; xi < 5.0; xi += 0.1) {
    const double o = output_squeezing(xi, pe);
    EXPECT_GT(o, prev);
    EXPECT_LT(o, output_squeezing_bound(pe));
    EXPECT_LT(o, xi);
    prev = o;
  }
  EXPECT_NEAR(to_db(output_squeezing_bound(pe)), 6.2, 0.1);
  EXPECT_NEAR(to_db(output_squeezing_bound(0.75)), 6.0, 0.1);
  EXPECT_EQ(output_squeezing(2.0, 1.0), 2.0);
  EXPECT_TRUE(std::isinf(output_squeezing_bound(1.0)));
  EXPECT_THROW(output_squeezing(-1.0, pe), Error);
  EXPECT_THROW(output_squeezing(1.0, 0.0), Error);
  EXPECT_NEAR(to_db(1.0), 8.685889638, 1e-8);
}

TEST(Schmidt, PurityBound) {
  Eigen::MatrixXd sep = Eigen::VectorXd::LinSpaced(5, 1.0, 5.0) * Eigen::RowVectorXd::Ones(5);
  EXPECT_NEAR(purity_bound(sep), 1.0, 1e-12);
  EXPECT_NEAR(purity_bound(Eigen::MatrixXd::Identity(4, 4)), 0.25, 1e-12);
  EXPECT_THROW(purity_bound(Eigen::MatrixXd::Zero(3, 3)), Error);
}

TEST(Schmidt, Csv) {
  const TimeGrid g{0.0, 80.0, 3};
  const auto d = decompose(Eigen::MatrixXcd::Identity(3, 3) * 1e-3, g);
  std::ostringstream os;
  write_schmidt_csv(os, d, 0.758);
  std::istringstream is(os.str());
  std::string h;
  std::getline(is, h);
  EXPECT_EQ(h, "mode,d_val,xi,xi_db,xi_out,xi_out_db");
  int lines = 0;
  for (std::string l; std::getline(is, l);) ++lines;
  EXPECT_EQ(lines, 3);
}
