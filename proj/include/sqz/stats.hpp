#ifndef SQZ_STATS_HPP
#define SQZ_STATS_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <random>
#include <utility>
#include <vector>

#include "sqz/error.hpp"
#include "sqz/parallel.hpp"

namespace sqz {

// Rows are points.
using Points = Eigen::MatrixXd;

struct EnergyTestResult {
  double d2 = 0.0;
  double p_value = 1.0;
  int n_permutations = 0;
  std::pair<int, int> sample_sizes{0, 0};
};

namespace detail {

inline Eigen::MatrixXd pooled_distances(const Points& x, const Points& y) {
  const Eigen::Index m = x.rows(), n = y.rows();
  Points z(m + n, x.cols());
  z << x, y;
  Eigen::MatrixXd d(m + n, m + n);
  for (Eigen::Index a = 0; a < m + n; ++a) {
    d(a, a) = 0.0;
    for (Eigen::Index b = a + 1; b < m + n; ++b) d(a, b) = d(b, a) = (z.row(a) - z.row(b)).norm();
  }
  return d;
}

// D^2 for the split with indicator x of the first sample.
inline double split_energy(const Eigen::MatrixXd& d, const Eigen::VectorXd& x, double total) {
  const double m = x.sum();
  const double n = static_cast<double>(x.size()) - m;
  const Eigen::VectorXd dx = d * x;
  const double sxx = x.dot(dx);
  const double syy = total - 2.0 * dx.sum() + sxx;
  const double sxy = 0.5 * (total - sxx - syy);
  return 2.0 * sxy / (m * n) - sxx / (m * m) - syy / (n * n);
}

inline void check_samples(const Points& x, const Points& y) {
  require(x.cols() == y.cols(), ErrorKind::shape, "samples differ in dimension");
  require(x.rows() >= 2 && y.rows() >= 2, ErrorKind::invalid_parameter,
          "energy distance needs at least two points per sample");
}

}  // namespace detail

inline double energy_distance(const Points& x, const Points& y) {
  detail::check_samples(x, y);
  const Eigen::Index m = x.rows(), n = y.rows();
  const auto d = detail::pooled_distances(x, y);
  Eigen::VectorXd ind = Eigen::VectorXd::Zero(m + n);
  ind.head(m).setOnes();
  return std::max(0.0, detail::split_energy(d, ind, d.sum()));
}

inline EnergyTestResult permutation_test(const Points& x, const Points& y, int n_perm = 1000,
                                         uint64_t seed = 0, unsigned workers = 0) {
  detail::check_samples(x, y);
  require(n_perm >= 100, ErrorKind::invalid_parameter, "n_perm must be >= 100");
  const int m = static_cast<int>(x.rows()), n = static_cast<int>(y.rows());
  const auto d = detail::pooled_distances(x, y);
  const double total = d.sum();
  Eigen::VectorXd base = Eigen::VectorXd::Zero(m + n);
  base.head(m).setOnes();
  EnergyTestResult res;
  res.d2 = std::max(0.0, detail::split_energy(d, base, total));
  res.n_permutations = n_perm;
  res.sample_sizes = {m, n};
  std::vector<char> exceed(size_t(n_perm), 0);
  parallel_for(
      size_t(n_perm),
      [&](size_t k) {
        std::seed_seq sq{seed, static_cast<uint64_t>(k)};
        std::mt19937_64 rng(sq);
        Eigen::VectorXd ind = base;
        std::shuffle(ind.begin(), ind.end(), rng);
        exceed[k] = detail::split_energy(d, ind, total) >= res.d2 - 1e-12 * std::abs(res.d2);
      },
      workers);
  const auto hits = std::count(exceed.begin(), exceed.end(), 1);
  res.p_value = (1.0 + double(hits)) / (1.0 + n_perm);
  return res;
}

struct SweepPoint {
  int sample_size = 0;
  EnergyTestResult result;
};

// p-value versus sample size, using the leading rows of each sample.
inline std::vector<SweepPoint> sample_size_sweep(const Points& x, const Points& y,
                                                 const std::vector<int>& sizes, int n_perm,
                                                 uint64_t seed) {
  std::vector<SweepPoint> out;
  for (int s : sizes) {
    require(s <= x.rows() && s <= y.rows(), ErrorKind::invalid_parameter,
            "sweep size exceeds the available samples");
    out.push_back({s, permutation_test(x.topRows(s), y.topRows(s), n_perm, seed)});
  }
  return out;
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepPoint>& sweep) {
  os << "sample_size,d2,p_value\n";
  os.precision(12);
  for (const auto& s : sweep) os << s.sample_size << ',' << s.result.d2 << ',' << s.result.p_value << '\n';
}

// Comma-separated numeric rows; '#' lines and one leading non-numeric header are skipped.
inline Points read_points(std::istream& is) {
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    bool ok = true;
    while (std::getline(ss, cell, ',')) {
      try {
        size_t used = 0;
        v.push_back(std::stod(cell, &used));
        ok = ok && used == cell.size();
      } catch (const std::exception&) {
        ok = false;
      }
    }
    const bool header = first && !ok;
    first = false;
    if (header) continue;
    require(ok, ErrorKind::parse, "bad sample row '" + line + "'");
    require(rows.empty() || v.size() == rows[0].size(), ErrorKind::format,
            "sample rows differ in dimension");
    rows.push_back(std::move(v));
  }
  require(!rows.empty(), ErrorKind::format, "no sample rows");
  Points p(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows[i].size(); ++j) p(Eigen::Index(i), Eigen::Index(j)) = rows[i][j];
  return p;
}

inline double fidelity(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q) {
  require(p.rows() == q.rows() && p.cols() == q.cols(), ErrorKind::grid_mismatch,
          "distributions on different grids");
  const double np = p.norm(), nq = q.norm();
  if (!(np > 0.0) || !(nq > 0.0)) throw Error(ErrorKind::undefined, "fidelity of a zero-norm distribution");
  return std::clamp(p.cwiseProduct(q).sum() / (np * nq), 0.0, 1.0);
}

// Outer product of the row and column marginals of p.
inline Eigen::MatrixXd marginal_product(const Eigen::MatrixXd& p) {
  const double s = p.sum();
  require(s > 0.0, ErrorKind::undefined, "marginal product of an empty distribution");
  return p.rowwise().sum() * p.colwise().sum() / s;
}

}  // namespace sqz

#endif
