#ifndef SQZ_SCHMIDT_HPP
#define SQZ_SCHMIDT_HPP

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <vector>

#include "sqz/moments.hpp"

namespace sqz {

inline constexpr double kXiFloor = 1e-6;

struct SchmidtDecomposition {
  Eigen::VectorXd d_vals;
  Eigen::VectorXd xi;
  Eigen::MatrixXcd p_s;  // columns are signal modes sampled on the grid
  Eigen::MatrixXcd p_i;
  double dt = 0.0;
  TimeGrid grid;

  int n_modes() const { return static_cast<int>(xi.size()); }

  double mean_pairs() const {
    double s = 0.0;
    for (double x : xi)
      if (x >= kXiFloor) s += std::sinh(x) * std::sinh(x);
    return s;
  }
  double schmidt_number() const {
    double s2 = 0.0, s4 = 0.0;
    for (double x : xi) {
      if (x < kXiFloor) continue;
      const double sh2 = std::sinh(x) * std::sinh(x);
      s2 += sh2;
      s4 += sh2 * sh2;
    }
    require(s4 > 0.0, ErrorKind::undefined, "Schmidt number undefined without squeezing");
    return s2 * s2 / s4;
  }
  double purity() const { return 1.0 / schmidt_number(); }
};

struct JointTemporalAmplitude {
  Eigen::MatrixXcd j_matrix;
  TimeGrid grid;

  // |J|^2 normalised to unit sum.
  Eigen::MatrixXd jti() const {
    Eigen::MatrixXd p = j_matrix.cwiseAbs2();
    const double s = p.sum();
    if (s > 0.0) p /= s;
    return p;
  }
};

inline SchmidtDecomposition decompose(const Eigen::MatrixXcd& m, const TimeGrid& grid) {
  require(m.rows() == grid.n_points && m.cols() == grid.n_points, ErrorKind::shape,
          "M must be N x N on the grid");
  require(m.allFinite(), ErrorKind::numerical, "M contains non-finite entries");
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.info() != Eigen::Success) {
    const auto s = svd.singularValues();
    throw Error(ErrorKind::numerical,
                "SVD did not converge; singular value range " + std::to_string(s.maxCoeff()) +
                    " .. " + std::to_string(s.minCoeff()));
  }
  SchmidtDecomposition d;
  d.dt = grid.dt;
  d.grid = grid;
  d.d_vals = svd.singularValues();
  d.xi.resize(d.d_vals.size());
  for (Eigen::Index k = 0; k < d.d_vals.size(); ++k)
    d.xi[k] = 0.5 * std::asinh(2.0 * d.d_vals[k] * grid.dt);
  d.p_s = svd.matrixU();
  d.p_i = svd.matrixV();
  return d;
}

inline SchmidtDecomposition decompose(const TwoTimeMoment& tt) {
  return decompose(tt.m_matrix, tt.grid);
}

// J_qp = sum_l xi_l / (2 dt) P_s(q,l) conj(P_i(p,l))
inline JointTemporalAmplitude jta(const SchmidtDecomposition& d) {
  Eigen::VectorXd r = Eigen::VectorXd::Zero(d.xi.size());
  for (Eigen::Index k = 0; k < d.xi.size(); ++k)
    if (d.xi[k] >= kXiFloor) r[k] = d.xi[k] / (2.0 * d.dt);
  JointTemporalAmplitude j;
  j.grid = d.grid;
  j.j_matrix = d.p_s * r.asDiagonal() * d.p_i.adjoint();
  return j;
}

inline double to_db(double nepers) { return 20.0 * nepers / std::numbers::ln10; }

inline double output_squeezing(double xi, double p_e) {
  require(xi >= 0.0, ErrorKind::invalid_parameter, "xi must be non-negative");
  require(p_e > 0.0 && p_e <= 1.0, ErrorKind::invalid_parameter, "p_e must be in (0,1]");
  if (p_e == 1.0) return xi;
  return -0.5 * std::log(1.0 - p_e + p_e * std::exp(-2.0 * xi));
}

inline double output_squeezing_bound(double p_e) {
  require(p_e > 0.0 && p_e <= 1.0, ErrorKind::invalid_parameter, "p_e must be in (0,1]");
  if (p_e == 1.0) return std::numeric_limits<double>::infinity();
  return -0.5 * std::log(1.0 - p_e);
}

// Purity bound of a joint intensity: SVD of sqrt(JTI) read as a low-gain JTA.
inline double purity_bound(const Eigen::MatrixXd& jti) {
  require(jti.allFinite(), ErrorKind::numerical, "JTI contains non-finite entries");
  const Eigen::MatrixXd a = jti.cwiseMax(0.0).cwiseSqrt();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const Eigen::VectorXd s = svd.singularValues();
  const double s2 = s.squaredNorm();
  require(s2 > 0.0, ErrorKind::undefined, "purity bound undefined for an empty JTI");
  return s.array().pow(4).sum() / (s2 * s2);
}

inline void write_schmidt_csv(std::ostream& os, const SchmidtDecomposition& d, double p_e) {
  os << "mode,d_val,xi,xi_db,xi_out,xi_out_db\n";
  os.precision(12);
  for (Eigen::Index k = 0; k < d.xi.size(); ++k) {
    const double xo = output_squeezing(d.xi[k], p_e);
    os << k << ',' << d.d_vals[k] << ',' << d.xi[k] << ',' << to_db(d.xi[k]) << ',' << xo << ','
       << to_db(xo) << '\n';
  }
}

}  // namespace sqz

#endif
