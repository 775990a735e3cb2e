#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "sqz/stats.hpp"

using namespace sqz;

namespace {

Points gaussian_points(int n, double shift, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Points p(n, 2);
  for (int k = 0; k < n; ++k) p.row(k) << g(rng) + shift, g(rng);
  return p;
}

}  // namespace

TEST(EnergyDistance, IdenticalSamplesGiveZero) {
  std::mt19937_64 rng(1);
  const auto x = gaussian_points(50, 0.0, rng);
  EXPECT_NEAR(energy_distance(x, x), 0.0, 1e-12);
}

TEST(EnergyDistance, PointMasses) {
  const double d = 3.5;
  Points x = Points::Zero(4, 2), y = Points::Zero(5, 2);
  y.col(0).setConstant(d);
  EXPECT_NEAR(energy_distance(x, y), 2.0 * d, 1e-12);
}

TEST(EnergyDistance, SymmetricAndMatchesDefinition) {
  std::mt19937_64 rng(2);
  const auto x = gaussian_points(30, 0.0, rng), y = gaussian_points(40, 0.5, rng);
  EXPECT_NEAR(energy_distance(x, y), energy_distance(y, x), 1e-12);
  double a = 0.0, b = 0.0, c = 0.0;
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j < 40; ++j) a += (x.row(i) - y.row(j)).norm();
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j < 30; ++j) b += (x.row(i) - x.row(j)).norm();
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 40; ++j) c += (y.row(i) - y.row(j)).norm();
  EXPECT_NEAR(energy_distance(x, y), 2.0 * a / 1200.0 - b / 900.0 - c / 1600.0, 1e-12);
  EXPECT_GT(energy_distance(x, y), 0.0);
}

TEST(EnergyDistance, Errors) {
  try {
    energy_distance(Points::Zero(3, 2), Points::Zero(3, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape);
  }
  EXPECT_THROW(energy_distance(Points::Zero(1, 2), Points::Zero(3, 2)), Error);
  EXPECT_THROW(permutation_test(Points::Zero(3, 2), Points::Zero(3, 2), 99), Error);
}

TEST(PermutationTest, DisjointSupports) {
  std::mt19937_64 rng(3);
  const auto x = gaussian_points(20, 0.0, rng), y = gaussian_points(20, 100.0, rng);
  const auto r = permutation_test(x, y, 500, 9);
  EXPECT_DOUBLE_EQ(r.p_value, 1.0 / 501.0);
  EXPECT_EQ(r.n_permutations, 500);
  EXPECT_EQ(r.sample_sizes, std::make_pair(20, 20));
}

TEST(PermutationTest, DeterministicAndWorkerIndependent) {
  std::mt19937_64 rng(4);
  const auto x = gaussian_points(40, 0.0, rng), y = gaussian_points(30, 0.3, rng);
  const auto a = permutation_test(x, y, 300, 5, 1);
  const auto b = permutation_test(x, y, 300, 5, 4);
  EXPECT_EQ(a.p_value, b.p_value);
  EXPECT_EQ(a.d2, b.d2);
  EXPECT_GT(a.p_value, 0.0);
  EXPECT_LE(a.p_value, 1.0);
}

TEST(PermutationTest, NullPValuesAreUniform) {
  std::mt19937_64 rng(5);
  std::vector<double> ps;
  for (int rep = 0; rep < 200; ++rep) {
    const auto x = gaussian_points(15, 0.0, rng), y = gaussian_points(15, 0.0, rng);
    ps.push_back(permutation_test(x, y, 199, uint64_t(rep)).p_value);
  }
  std::sort(ps.begin(), ps.end());
  double ks = 0.0;
  for (size_t k = 0; k < ps.size(); ++k) {
    const double n = double(ps.size());
    ks = std::max({ks, std::abs(ps[k] - k / n), std::abs(ps[k] - (k + 1) / n)});
  }
  // 1% critical value of the one-sample KS statistic, plus the p-value lattice step
  EXPECT_LT(ks, 1.63 / std::sqrt(200.0) + 1.0 / 200.0);
}

TEST(PermutationTest, DetectsShift) {
  std::mt19937_64 rng(6);
  const auto x = gaussian_points(100, 0.0, rng), y = gaussian_points(100, 1.0, rng);
  EXPECT_LT(permutation_test(x, y, 200, 1).p_value, 0.01);
}

TEST(SampleSizeSweep, CsvAndSizes) {
  std::mt19937_64 rng(7);
  const auto x = gaussian_points(60, 0.0, rng), y = gaussian_points(60, 1.0, rng);
  const auto sweep = sample_size_sweep(x, y, {10, 30, 60}, 100, 3);
  ASSERT_EQ(sweep.size(), 3u);
  EXPECT_EQ(sweep[2].result.sample_sizes, std::make_pair(60, 60));
  std::ostringstream os;
  write_sweep_csv(os, sweep);
  EXPECT_EQ(os.str().rfind("sample_size,d2,p_value\n10,", 0), 0u);
  EXPECT_THROW(sample_size_sweep(x, y, {61}, 100, 3), Error);
}

TEST(Fidelity, Properties) {
  Eigen::MatrixXd p(2, 2), q(2, 2);
  p << 1, 2, 3, 4;
  q << 0, 0, 0, 1;
  EXPECT_NEAR(fidelity(p, p), 1.0, 1e-15);
  EXPECT_NEAR(fidelity(p, 3.0 * p), 1.0, 1e-15);
  EXPECT_NEAR(fidelity(2.0 * p, 5.0 * q), fidelity(p, q), 1e-15);
  EXPECT_LE(fidelity(p, q), 1.0);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2), b = Eigen::MatrixXd::Zero(2, 2);
  a(0, 0) = 1.0;
  b(1, 1) = 1.0;
  EXPECT_EQ(fidelity(a, b), 0.0);
}

TEST(Fidelity, Errors) {
  try {
    fidelity(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Ones(2, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::undefined);
  }
  try {
    fidelity(Eigen::MatrixXd::Ones(2, 3), Eigen::MatrixXd::Ones(2, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::grid_mismatch);
  }
}

TEST(Fidelity, MarginalProductOfSeparableIsExact) {
  const Eigen::VectorXd a = Eigen::VectorXd::LinSpaced(6, 1.0, 2.0);
  const Eigen::VectorXd b = Eigen::VectorXd::LinSpaced(6, 3.0, 0.5);
  const Eigen::MatrixXd p = a * b.transpose();
  EXPECT_LT((marginal_product(p) - p).norm(), 1e-12);
  EXPECT_NEAR(fidelity(marginal_product(p), p), 1.0, 1e-15);
  EXPECT_LT(fidelity(marginal_product(Eigen::MatrixXd::Identity(4, 4)), Eigen::MatrixXd::Identity(4, 4)),
            0.6);
}

TEST(ReadPoints, HeaderCommentsAndErrors) {
  std::istringstream ok("t_s,t_i\n# comment\n1,2\n3.5,4\r\n");
  const auto p = read_points(ok);
  ASSERT_EQ(p.rows(), 2);
  EXPECT_EQ(p(1, 0), 3.5);
  EXPECT_EQ(p(1, 1), 4.0);
  std::istringstream ragged("1,2\n3\n");
  EXPECT_THROW(read_points(ragged), Error);
  std::istringstream bad("1,2\nx,4\n");
  EXPECT_THROW(read_points(bad), Error);
  std::istringstream empty("a,b\n");
  EXPECT_THROW(read_points(empty), Error);
}
