#ifndef SQZ_ODE_HPP
#define SQZ_ODE_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "sqz/error.hpp"

namespace sqz {

struct OdeOptions {
  double rtol = 1e-9;
  double atol = 1e-13;
  double h_init = 0.0;
  int max_steps = 2000000;
};

// One accepted step of the 5(4) pair with its quartic continuous extension.
struct DenseSegment {
  double t0 = 0.0;
  double h = 0.0;
  Eigen::VectorXd r1, r2, r3, r4, r5;

  Eigen::VectorXd operator()(double t) const {
    const double s = (t - t0) / h;
    const double s1 = 1.0 - s;
    return r1 + s * (r2 + s1 * (r3 + s * (r4 + s1 * r5)));
  }
};

class DenseSolution {
 public:
  void append(DenseSegment seg) { segs_.push_back(std::move(seg)); }
  bool empty() const { return segs_.empty(); }
  double t_begin() const { return segs_.front().t0; }
  double t_end() const { return segs_.back().t0 + segs_.back().h; }
  size_t size() const { return segs_.size(); }

  Eigen::VectorXd operator()(double t) const {
    auto it = std::upper_bound(segs_.begin(), segs_.end(), t,
                               [](double v, const DenseSegment& s) { return v < s.t0; });
    if (it != segs_.begin()) --it;
    return (*it)(t);
  }

  // Merge another solution covering a later interval.
  void extend(const DenseSolution& o) { segs_.insert(segs_.end(), o.segs_.begin(), o.segs_.end()); }

 private:
  std::vector<DenseSegment> segs_;
};

// Dormand-Prince 5(4) with PI step control. f(t, y, dydt).
template <class F>
class Dopri5 {
 public:
  Dopri5(F f, OdeOptions opt = {}) : f_(std::move(f)), opt_(opt) {}

  // Integrate y from t0 to t1 in place; if dense is given, every accepted step is stored.
  void integrate(double t0, double t1, Eigen::VectorXd& y, DenseSolution* dense = nullptr) {
    if (t1 <= t0) return;
    const Eigen::Index n = y.size();
    k1_.resize(n);
    f_(t0, y, k1_);
    double h = opt_.h_init > 0.0 ? opt_.h_init : initial_step(t0, y);
    double t = t0;
    double err_old = 1e-4;
    bool last_rejected = false;
    int steps = 0;
    while (t < t1) {
      if (++steps > opt_.max_steps)
        throw Error(ErrorKind::integration, "ODE step budget exhausted at t=" + std::to_string(t));
      if (t + h >= t1 || t + 1.01 * h >= t1) h = t1 - t;
      if (h <= 1e-14 * std::max(1.0, std::abs(t)))
        throw Error(ErrorKind::integration, "step size underflow at t=" + std::to_string(t));
      const double err = try_step(t, h, y);
      if (!std::isfinite(err))
        throw Error(ErrorKind::integration, "non-finite state at t=" + std::to_string(t));
      if (err <= 1.0) {
        if (dense) dense->append(make_segment(t, h, y));
        t = (t1 - (t + h) <= 1e-12 * std::abs(t1)) ? t1 : t + h;
        y = y_new_;
        k1_ = k7_;
        double fac = 0.9 * std::pow(err, -0.7 / 5.0) * std::pow(err_old, 0.4 / 5.0);
        if (err == 0.0) fac = 5.0;
        fac = std::clamp(fac, 0.2, 5.0);
        if (last_rejected) fac = std::min(fac, 1.0);
        h *= fac;
        err_old = std::max(err, 1e-4);
        last_rejected = false;
      } else {
        h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
        last_rejected = true;
      }
    }
  }

 private:
  double norm(const Eigen::VectorXd& e, const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    double s = 0.0;
    for (Eigen::Index i = 0; i < e.size(); ++i) {
      const double sc = opt_.atol + opt_.rtol * std::max(std::abs(a[i]), std::abs(b[i]));
      const double r = e[i] / sc;
      s += r * r;
    }
    return std::sqrt(s / static_cast<double>(std::max<Eigen::Index>(1, e.size())));
  }

  double initial_step(double t, const Eigen::VectorXd& y) {
    const double d0 = norm(y, y, y);
    const double d1 = norm(k1_, y, y);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    Eigen::VectorXd y1 = y + h0 * k1_;
    Eigen::VectorXd f1(y.size());
    f_(t + h0, y1, f1);
    const double d2 = norm(f1 - k1_, y, y) / h0;
    const double h1 = (std::max(d1, d2) <= 1e-15) ? std::max(1e-6, h0 * 1e-3)
                                                   : std::pow(0.01 / std::max(d1, d2), 0.2);
    return std::min(100.0 * h0, h1);
  }

  double try_step(double t, double h, const Eigen::VectorXd& y) {
    static constexpr double a21 = 1.0 / 5.0, a31 = 3.0 / 40.0, a32 = 9.0 / 40.0,
                            a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0,
                            a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0,
                            a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0,
                            a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                            a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0, a71 = 35.0 / 384.0,
                            a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0, a75 = -2187.0 / 6784.0,
                            a76 = 11.0 / 84.0, e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0,
                            e4 = 71.0 / 1920.0, e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0,
                            e7 = -1.0 / 40.0;
    const Eigen::Index n = y.size();
    k2_.resize(n); k3_.resize(n); k4_.resize(n); k5_.resize(n); k6_.resize(n); k7_.resize(n);
    tmp_ = y + h * a21 * k1_;
    f_(t + h / 5.0, tmp_, k2_);
    tmp_ = y + h * (a31 * k1_ + a32 * k2_);
    f_(t + 3.0 * h / 10.0, tmp_, k3_);
    tmp_ = y + h * (a41 * k1_ + a42 * k2_ + a43 * k3_);
    f_(t + 4.0 * h / 5.0, tmp_, k4_);
    tmp_ = y + h * (a51 * k1_ + a52 * k2_ + a53 * k3_ + a54 * k4_);
    f_(t + 8.0 * h / 9.0, tmp_, k5_);
    tmp_ = y + h * (a61 * k1_ + a62 * k2_ + a63 * k3_ + a64 * k4_ + a65 * k5_);
    f_(t + h, tmp_, k6_);
    y_new_ = y + h * (a71 * k1_ + a73 * k3_ + a74 * k4_ + a75 * k5_ + a76 * k6_);
    f_(t + h, y_new_, k7_);
    err_ = h * (e1 * k1_ + e3 * k3_ + e4 * k4_ + e5 * k5_ + e6 * k6_ + e7 * k7_);
    return norm(err_, y, y_new_);
  }

  DenseSegment make_segment(double t, double h, const Eigen::VectorXd& y) const {
    static constexpr double d1 = -12715105075.0 / 11282082432.0,
                            d3 = 87487479700.0 / 32700410799.0,
                            d4 = -10690763975.0 / 1880347072.0,
                            d5 = 701980252875.0 / 199316789632.0,
                            d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
    DenseSegment s;
    s.t0 = t;
    s.h = h;
    s.r1 = y;
    const Eigen::VectorXd ydiff = y_new_ - y;
    s.r2 = ydiff;
    const Eigen::VectorXd bspl = h * k1_ - ydiff;
    s.r3 = bspl;
    s.r4 = ydiff - h * k7_ - bspl;
    s.r5 = h * (d1 * k1_ + d3 * k3_ + d4 * k4_ + d5 * k5_ + d6 * k6_ + d7 * k7_);
    return s;
  }

  F f_;
  OdeOptions opt_;
  Eigen::VectorXd k1_, k2_, k3_, k4_, k5_, k6_, k7_, tmp_, y_new_, err_;
};

template <class F>
Dopri5<F> make_dopri5(F f, OdeOptions opt = {}) {
  return Dopri5<F>(std::move(f), opt);
}

}  // namespace sqz

#endif
