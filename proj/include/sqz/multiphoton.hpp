#ifndef SQZ_MULTIPHOTON_HPP
#define SQZ_MULTIPHOTON_HPP

#include <Eigen/Dense>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sqz/parallel.hpp"
#include "sqz/schmidt.hpp"

namespace sqz {

inline constexpr int kPermanentCap = 20;

// Glynn formula with Gray-code ordering; a is row-major n x n.
inline cd permanent_rowmajor(const cd* a, int n) {
  if (n == 0) return {1.0, 0.0};
  if (n == 1) return a[0];
  std::array<cd, kPermanentCap> v{};
  std::array<int, kPermanentCap> delta{};
  for (int j = 0; j < n; ++j) {
    cd s{};
    for (int i = 0; i < n; ++i) s += a[i * n + j];
    v[size_t(j)] = s;
  }
  for (int i = 0; i < n; ++i) delta[size_t(i)] = 1;
  auto prod = [&] {
    cd p = v[0];
    for (int j = 1; j < n; ++j) p *= v[size_t(j)];
    return p;
  };
  cd total = prod();
  double sign = 1.0;
  const uint64_t steps = uint64_t(1) << (n - 1);
  for (uint64_t k = 1; k < steps; ++k) {
    const int i = std::countr_zero(k) + 1;
    const cd* row = a + size_t(i) * n;
    if (delta[size_t(i)] > 0) {
      for (int j = 0; j < n; ++j) v[size_t(j)] -= 2.0 * row[j];
    } else {
      for (int j = 0; j < n; ++j) v[size_t(j)] += 2.0 * row[j];
    }
    delta[size_t(i)] = -delta[size_t(i)];
    sign = -sign;
    total += sign * prod();
  }
  return total / static_cast<double>(steps);
}

inline cd permanent(const Eigen::MatrixXcd& a) {
  require(a.rows() == a.cols(), ErrorKind::shape, "permanent needs a square matrix");
  require(a.rows() <= kPermanentCap, ErrorKind::size,
          "permanent size " + std::to_string(a.rows()) + " exceeds cap " +
              std::to_string(kPermanentCap));
  const int n = static_cast<int>(a.rows());
  std::vector<cd> buf(size_t(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) buf[size_t(i) * n + j] = a(i, j);
  return permanent_rowmajor(buf.data(), n);
}

struct MCMCConfig {
  int n_samples = 80000;  // retained samples
  int burn_in = 1000;     // in retained-sample units
  int thin = 200;
  uint64_t seed = 0;
};

// Metropolis chain over (s_1..s_n, i_1..i_n) with target |Perm J[s, i]|^2.
class PermanentChain {
 public:
  PermanentChain(const Eigen::MatrixXcd& j, int n, uint64_t seed)
      : j_(&j), n_(n), grid_n_(static_cast<int>(j.rows())) {
    require(n >= 1 && n <= kPermanentCap, ErrorKind::size, "pair number out of range");
    std::seed_seq sq{seed, static_cast<uint64_t>(n), uint64_t(0x5eed)};
    rng_.seed(sq);
    Eigen::Index q0 = 0, p0 = 0;
    j.cwiseAbs2().maxCoeff(&q0, &p0);
    s_.assign(size_t(n), static_cast<int>(q0));
    i_.assign(size_t(n), static_cast<int>(p0));
    cur_.resize(size_t(n) * n);
    prop_.resize(cur_.size());
    fill(cur_, s_, i_);
    w_ = std::norm(permanent_rowmajor(cur_.data(), n_));
  }

  void step() {
    std::uniform_int_distribution<int> pick(0, 2 * n_ - 1);
    std::uniform_int_distribution<int> bin(0, grid_n_ - 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int which = pick(rng_);
    const int val = bin(rng_);
    prop_ = cur_;
    if (which < n_) {
      for (int c = 0; c < n_; ++c) prop_[size_t(which) * n_ + c] = (*j_)(val, i_[size_t(c)]);
    } else {
      const int c = which - n_;
      for (int r = 0; r < n_; ++r) prop_[size_t(r) * n_ + c] = (*j_)(s_[size_t(r)], val);
    }
    const double w_new = std::norm(permanent_rowmajor(prop_.data(), n_));
    ++proposed_;
    if (w_ <= 0.0 || w_new >= w_ || u(rng_) * w_ < w_new) {
      std::swap(cur_, prop_);
      w_ = w_new;
      if (which < n_) s_[size_t(which)] = val;
      else i_[size_t(which - n_)] = val;
      ++accepted_;
    }
  }

  void advance(long steps) {
    for (long k = 0; k < steps; ++k) step();
  }

  const std::vector<int>& signal() const { return s_; }
  const std::vector<int>& idler() const { return i_; }
  double acceptance_rate() const {
    return proposed_ ? static_cast<double>(accepted_) / static_cast<double>(proposed_) : 0.0;
  }
  std::mt19937_64& rng() { return rng_; }

 private:
  void fill(std::vector<cd>& buf, const std::vector<int>& s, const std::vector<int>& i) const {
    for (int r = 0; r < n_; ++r)
      for (int c = 0; c < n_; ++c) buf[size_t(r) * n_ + c] = (*j_)(s[size_t(r)], i[size_t(c)]);
  }

  const Eigen::MatrixXcd* j_;
  int n_, grid_n_;
  std::mt19937_64 rng_;
  std::vector<int> s_, i_;
  std::vector<cd> cur_, prop_;
  double w_ = 0.0;
  long proposed_ = 0, accepted_ = 0;
};

struct PairTimeDistribution {
  int n_pairs = 0;
  TimeGrid grid;
  Eigen::MatrixXd p;          // density, sum p dt^2 = 1
  Eigen::MatrixXd mc_stderr;  // same units
  double acceptance_rate = 1.0;
  std::string warning;
  std::vector<std::array<int, 2>> samples;  // first signal/idler index of each retained sample

  Eigen::MatrixXd mass() const { return p * grid.dt * grid.dt; }
};

inline PairTimeDistribution marginal_pn(const JointTemporalAmplitude& jt, int n,
                                        const MCMCConfig& cfg) {
  require(n >= 1, ErrorKind::invalid_parameter, "n must be >= 1");
  const int N = jt.grid.n_points;
  const double area = jt.grid.dt * jt.grid.dt;
  PairTimeDistribution out;
  out.n_pairs = n;
  out.grid = jt.grid;
  if (n == 1) {
    out.p = jt.jti() / area;
    out.mc_stderr = Eigen::MatrixXd::Zero(N, N);
    return out;
  }
  require(cfg.n_samples >= 20 && cfg.thin >= 1 && cfg.burn_in >= 0,
          ErrorKind::invalid_parameter, "bad MCMC configuration");
  PermanentChain chain(jt.j_matrix, n, cfg.seed);
  chain.advance(static_cast<long>(cfg.burn_in) * cfg.thin);
  constexpr int kBatches = 20;
  std::vector<Eigen::MatrixXd> batch(kBatches, Eigen::MatrixXd::Zero(N, N));
  const double w = 1.0 / (double(n) * n);
  out.samples.reserve(size_t(cfg.n_samples));
  for (int k = 0; k < cfg.n_samples; ++k) {
    chain.advance(cfg.thin);
    auto& h = batch[size_t(k) * kBatches / size_t(cfg.n_samples)];
    const auto& s = chain.signal();
    const auto& i = chain.idler();
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) h(s[size_t(a)], i[size_t(b)]) += w;
    out.samples.push_back({s[0], i[0]});
  }
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(N, N);
  for (const auto& h : batch) total += h;
  const double norm = total.sum();
  Eigen::MatrixXd var = Eigen::MatrixXd::Zero(N, N);
  const Eigen::MatrixXd mean = total / norm;
  for (const auto& h : batch) {
    const double nb = h.sum();
    var += (h / nb - mean).array().square().matrix();
  }
  var /= double(kBatches) * (kBatches - 1);
  out.p = mean / area;
  out.mc_stderr = var.cwiseSqrt() / area;
  out.acceptance_rate = chain.acceptance_rate();
  if (out.acceptance_rate < 0.05 || out.acceptance_rate > 0.7)
    out.warning = "acceptance rate " + std::to_string(out.acceptance_rate) +
                  " outside [0.05, 0.7]; chain may not mix";
  return out;
}

// Independent chains for several n; chain k is seeded from (cfg.seed, n_k).
inline std::vector<PairTimeDistribution> marginal_pn_many(const JointTemporalAmplitude& jt,
                                                          const std::vector<int>& ns,
                                                          const MCMCConfig& cfg,
                                                          unsigned workers = 0) {
  std::vector<PairTimeDistribution> out(ns.size());
  parallel_for(ns.size(), [&](size_t k) { out[k] = marginal_pn(jt, ns[k], cfg); }, workers);
  return out;
}

// Signal and idler one-time marginals of a joint distribution.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> marginals(const Eigen::MatrixXd& p) {
  return {p.rowwise().sum(), p.colwise().sum().transpose()};
}

// ---------------------------------------------------------------- detection

struct DetectionProbabilities {
  std::vector<double> h1, h2, h3;  // index n = 0..n_max
  DetectionModel model;
};

namespace detail {

// P(at least m distinct ports get >= 1 photon | n photons), multinomial over ports + loss.
inline double ports_clicking_at_least(const std::vector<double>& eta, int n, int m) {
  if (m == 0) return 1.0;
  if (static_cast<int>(eta.size()) < m || n < m) return 0.0;
  const int nc = static_cast<int>(eta.size());
  double loss = 1.0;
  for (double e : eta) loss -= e;
  loss = std::max(0.0, loss);
  std::vector<double> lf(size_t(n) + 1, 0.0);
  for (int k = 1; k <= n; ++k) lf[size_t(k)] = lf[size_t(k - 1)] + std::log(double(k));
  double total = 0.0;
  std::vector<int> k(size_t(nc), 0);
  std::function<void(int, int)> rec = [&](int port, int left) {
    if (port == nc) {
      int clicked = 0;
      for (int v : k) clicked += v > 0;
      if (clicked < m) return;
      double lp = lf[size_t(n)] - lf[size_t(left)];
      for (int c = 0; c < nc; ++c) {
        if (k[size_t(c)] == 0) continue;
        if (eta[size_t(c)] <= 0.0) return;
        lp += k[size_t(c)] * std::log(eta[size_t(c)]) - lf[size_t(k[size_t(c)])];
      }
      if (left > 0) {
        if (loss <= 0.0) return;
        lp += left * std::log(loss);
      }
      total += std::exp(lp);
      return;
    }
    for (int v = 0; v <= left; ++v) {
      k[size_t(port)] = v;
      rec(port + 1, left - v);
    }
    k[size_t(port)] = 0;
  };
  rec(0, n);
  return total;
}

}  // namespace detail

inline DetectionProbabilities detection_probs(const DetectionModel& model, int n_max) {
  model.validate();
  require(n_max >= 0 && n_max <= 30, ErrorKind::invalid_parameter, "n_max must be in [0, 30]");
  DetectionProbabilities d;
  d.model = model;
  for (int n = 0; n <= n_max; ++n) {
    d.h1.push_back(detail::ports_clicking_at_least(model.eta_s, n, 1) *
                   detail::ports_clicking_at_least(model.eta_i, n, 1));
    d.h2.push_back(detail::ports_clicking_at_least(model.eta_s, n, 2) *
                   detail::ports_clicking_at_least(model.eta_i, n, 2));
    d.h3.push_back(detail::ports_clicking_at_least(model.eta_s, n, 3) *
                   detail::ports_clicking_at_least(model.eta_i, n, 3));
  }
  return d;
}

// Per-n weights of the 2-, 4- and 6-fold accumulators.
struct CoincidenceWeights {
  std::vector<double> w1, w2, w3;
};

inline CoincidenceWeights threshold_weights(const DetectionProbabilities& d) {
  return {d.h1, d.h2, d.h3};
}

// How photons in one detector port become clicks within a pulse.
enum class ClickModel { one_per_pulse, one_per_bin };

namespace detail {

// E[C(c, m)] for c the number of clicking ports among eta when n photons arrive,
// each port clicking at most once (inclusion-exclusion over port subsets).
inline double expected_port_combinations(const std::vector<double>& eta, int n, int m) {
  const int nc = static_cast<int>(eta.size());
  double total = 0.0;
  for (uint32_t mask = 0; mask < (1u << nc); ++mask) {
    if (std::popcount(mask) != m) continue;
    double p = 0.0;
    for (uint32_t sub = mask;; sub = (sub - 1) & mask) {
      double miss = 1.0;
      for (int k = 0; k < nc; ++k)
        if (sub & (1u << k)) miss -= eta[size_t(k)];
      const int sz = std::popcount(sub);
      p += ((sz % 2) ? -1.0 : 1.0) * std::pow(std::max(0.0, miss), n);
      if (sub == 0) break;
    }
    total += p;
  }
  return total;
}

}  // namespace detail

// Expected accumulator entries per pulse with n pairs under the all-pairings histogram.
inline CoincidenceWeights pairing_weights(const DetectionModel& model, int n_max,
                                          ClickModel clicks = ClickModel::one_per_pulse) {
  model.validate();
  if (clicks == ClickModel::one_per_pulse) {
    require(model.eta_s.size() <= 16 && model.eta_i.size() <= 16, ErrorKind::size,
            "at most 16 ports per species");
    CoincidenceWeights w;
    for (int n = 0; n <= n_max; ++n) {
      auto e = [&](const std::vector<double>& eta, int m) {
        return detail::expected_port_combinations(eta, n, m);
      };
      w.w1.push_back(e(model.eta_s, 1) * e(model.eta_i, 1));
      w.w2.push_back(4.0 * e(model.eta_s, 2) * e(model.eta_i, 2));
      w.w3.push_back(9.0 * e(model.eta_s, 3) * e(model.eta_i, 3));
    }
    return w;
  }
  const double es = model.total_s(), ei = model.total_i();
  CoincidenceWeights w;
  for (int n = 0; n <= n_max; ++n) {
    const double c2 = 0.5 * n * (n - 1.0), c3 = n * (n - 1.0) * (n - 2.0) / 6.0;
    w.w1.push_back(double(n) * n * es * ei);
    w.w2.push_back(4.0 * c2 * c2 * es * es * ei * ei);
    w.w3.push_back(9.0 * c3 * c3 * std::pow(es * ei, 3));
  }
  return w;
}

// ---------------------------------------------------------------- pair numbers

struct PairNumberDistribution {
  std::vector<double> r;  // n = 0..n_max
  double tail = 0.0;      // 1 - sum r
  double mean() const {
    double m = 0.0;
    for (size_t n = 0; n < r.size(); ++n) m += double(n) * r[n];
    return m;
  }
};

inline PairNumberDistribution rn_from_schmidt(const SchmidtDecomposition& d, int n_max) {
  require(n_max >= 0, ErrorKind::invalid_parameter, "n_max must be >= 0");
  std::vector<double> r(size_t(n_max) + 1, 0.0);
  r[0] = 1.0;
  for (double xi : d.xi) {
    if (xi < kXiFloor) continue;
    const double x = std::pow(std::tanh(xi), 2);
    std::vector<double> g(r.size());
    double pk = 1.0 - x;
    for (size_t k = 0; k < g.size(); ++k, pk *= x) g[k] = pk;
    std::vector<double> c(r.size(), 0.0);
    for (size_t a = 0; a < r.size(); ++a)
      for (size_t b = 0; a + b < r.size(); ++b) c[a + b] += r[a] * g[b];
    r = std::move(c);
  }
  PairNumberDistribution out;
  out.r = r;
  double s = 0.0;
  for (double v : r) s += v;
  out.tail = std::max(0.0, 1.0 - s);
  return out;
}

// One-body signal/idler index distributions of the n-pair component of the JTA
// state: modes occupied with weights proportional to xi^2, conditioned on n.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> n_pair_one_body(const SchmidtDecomposition& d,
                                                                   int n) {
  std::vector<int> modes;
  for (int k = 0; k < d.n_modes(); ++k)
    if (d.xi[k] >= kXiFloor) modes.push_back(k);
  require(!modes.empty(), ErrorKind::undefined, "no squeezed modes");
  const double x0 = d.xi[modes[0]] * d.xi[modes[0]];
  std::vector<double> x;
  for (int k : modes) x.push_back(d.xi[k] * d.xi[k] / x0);
  auto partition = [&](int skip) {
    std::vector<double> z(size_t(n) + 1, 0.0);
    z[0] = 1.0;
    for (size_t l = 0; l < x.size(); ++l) {
      if (static_cast<int>(l) == skip) continue;
      for (int m = 1; m <= n; ++m) z[size_t(m)] += x[l] * z[size_t(m - 1)];
    }
    return z;
  };
  const auto z_all = partition(-1);
  const Eigen::Index N = d.p_s.rows();
  Eigen::VectorXd ps = Eigen::VectorXd::Zero(N), pi = Eigen::VectorXd::Zero(N);
  for (size_t l = 0; l < x.size(); ++l) {
    const auto z = partition(static_cast<int>(l));
    double ek = 0.0, xl = 1.0;
    for (int j = 1; j <= n; ++j) {
      xl *= x[l];
      ek += j * xl * z[size_t(n - j)];
    }
    ek /= z_all[size_t(n)];
    ps += ek * d.p_s.col(modes[l]).cwiseAbs2();
    pi += ek * d.p_i.col(modes[l]).cwiseAbs2();
  }
  return {ps / ps.sum(), pi / pi.sum()};
}

// ---------------------------------------------------------------- model and correction

struct CoincidenceModel {
  Eigen::MatrixXd p;  // expected accumulator entries per pulse
  double tail_bound = 0.0;
  std::string warning;
};

// pn[k] is the normalised (unit-sum) P_{k+1}.
inline CoincidenceModel coincidence_model(const std::vector<Eigen::MatrixXd>& pn,
                                          const PairNumberDistribution& r,
                                          const std::vector<double>& w1) {
  require(!pn.empty(), ErrorKind::invalid_parameter, "no P_n supplied");
  const size_t n_max = pn.size();
  require(w1.size() > n_max && r.r.size() > n_max, ErrorKind::invalid_parameter,
          "weights or r_n shorter than the P_n list");
  CoincidenceModel m;
  m.p = Eigen::MatrixXd::Zero(pn[0].rows(), pn[0].cols());
  double total = 0.0;
  for (size_t n = 1; n <= n_max; ++n) {
    m.p += w1[n] * r.r[n] * pn[n - 1] / pn[n - 1].sum();
    total += w1[n] * r.r[n];
  }
  // remaining weight beyond n_max: known r_n entries plus the untracked tail at the last weight
  double tail = 0.0;
  for (size_t n = n_max + 1; n < r.r.size() && n < w1.size(); ++n) tail += w1[n] * r.r[n];
  tail += r.tail * w1.back();
  m.tail_bound = tail;
  if (tail > 0.01 * total) m.warning = "truncation tail exceeds 1% of the modelled coincidences";
  return m;
}

enum class CorrectionOrder { four_fold, six_fold };

struct CorrectionResult {
  double alpha_opt = 0.0;
  std::optional<double> beta_opt;
  double condition = 1.0;
  Eigen::MatrixXd p1_unclipped;
  Eigen::MatrixXd p1_estimate;
  double clipped_fraction = 0.0;
  double purity_bound = 0.0;
};

inline CorrectionResult correct_p1(const Eigen::MatrixXd& p2, const Eigen::MatrixXd& p4,
                                   const Eigen::MatrixXd* p6, const CoincidenceWeights& w,
                                   const PairNumberDistribution& r, CorrectionOrder order) {
  require(p2.rows() == p4.rows() && p2.cols() == p4.cols(), ErrorKind::grid_mismatch,
          "two-fold and four-fold histograms differ in shape");
  const size_t nn = std::min({w.w1.size(), w.w2.size(), r.r.size()});
  require(nn >= 3 && w.w1[1] > 0.0, ErrorKind::invalid_parameter,
          "weights needed for n = 1, 2 at least");
  double num = 0.0, den = 0.0;
  for (size_t n = 2; n < nn; ++n) {
    num += w.w1[n] * r.r[n];
    den += w.w2[n] * r.r[n];
  }
  if (den <= 0.0)
    throw Error(ErrorKind::no_multipair, "no multi-pair weight; correction unnecessary");
  CorrectionResult res;
  res.alpha_opt = -num / den;
  Eigen::MatrixXd corr = p2 + res.alpha_opt * p4;
  if (order == CorrectionOrder::six_fold) {
    require(p6 != nullptr && p6->rows() == p2.rows() && p6->cols() == p2.cols(),
            ErrorKind::grid_mismatch, "six-fold histogram missing or of different shape");
    require(w.w3.size() > 3 && w.w2.size() > 3 && w.w1.size() > 3,
            ErrorKind::invalid_parameter, "weights needed up to n = 3");
    Eigen::Matrix2d a;
    a << w.w2[2], w.w3[2], w.w2[3], w.w3[3];
    const Eigen::Vector2d b(-w.w1[2], -w.w1[3]);
    Eigen::JacobiSVD<Eigen::Matrix2d> svd(a);
    const auto s = svd.singularValues();
    res.condition = s[1] > 0.0 ? s[0] / s[1] : std::numeric_limits<double>::infinity();
    if (!(res.condition <= 1e6))
      throw IllConditioned(res.condition, "six-fold inversion ill-conditioned (condition " +
                                              std::to_string(res.condition) + ")");
    const Eigen::Vector2d ab = a.fullPivLu().solve(b);
    res.alpha_opt = ab[0];
    res.beta_opt = ab[1];
    corr = p2 + ab[0] * p4 + ab[1] * (*p6);
  }
  res.p1_unclipped = corr / w.w1[1];
  res.p1_estimate = res.p1_unclipped.cwiseMax(0.0);
  const double pos = res.p1_estimate.sum();
  const double neg = (res.p1_unclipped - res.p1_estimate).cwiseAbs().sum();
  res.clipped_fraction = pos + neg > 0.0 ? neg / (pos + neg) : 0.0;
  res.purity_bound = pos > 0.0 ? purity_bound(res.p1_estimate) : 0.0;
  return res;
}

}  // namespace sqz

#endif
