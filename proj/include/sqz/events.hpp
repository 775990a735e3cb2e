#ifndef SQZ_EVENTS_HPP
#define SQZ_EVENTS_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sqz/multiphoton.hpp"

namespace sqz {

struct TimeTag {
  int64_t pulse = 0;
  int channel = 0;
  int64_t time_ps = 0;
  bool operator==(const TimeTag&) const = default;
};

struct TimeTagStream {
  std::vector<TimeTag> records;
  int64_t n_pulses = 0;
  int64_t malformed_lines = 0;
  bool operator==(const TimeTagStream& o) const {
    return n_pulses == o.n_pulses && records == o.records;
  }
};

enum class Role { signal, idler };

struct PortAssignment {
  Role role;
  int detector;
};

using PortMap = std::map<int, PortAssignment>;

// Signal ports are channels 1..Ns, idler ports Ns+1..Ns+Ni.
inline PortMap default_port_map(const DetectionModel& model) {
  PortMap m;
  const int ns = static_cast<int>(model.eta_s.size());
  for (int k = 0; k < ns; ++k) m[k + 1] = {Role::signal, k};
  for (int k = 0; k < static_cast<int>(model.eta_i.size()); ++k) m[ns + k + 1] = {Role::idler, k};
  return m;
}

struct SynthConfig {
  ClickModel clicks = ClickModel::one_per_pulse;
  bool earliest_click = false;  // one_per_pulse: first photon clicks instead of a random one
  int n_max = 30;
  int n_perm = 10;           // exact permanent sampling up to this pair number
  int sweeps_per_draw = 1;   // chain steps per pulse, in units of 2n
  int burn_in_sweeps = 500;
  unsigned workers = 0;
};

struct SynthReport {
  PairNumberDistribution r;
  std::vector<double> acceptance;  // per n <= n_perm
  std::string warning;
};

namespace detail {

// Draws the 2n arrival-time indices of an n-pair pulse.
class PairSampler {
 public:
  PairSampler(const SchmidtDecomposition& d, const JointTemporalAmplitude& jt,
              const SynthConfig& cfg, uint64_t seed)
      : d_(&d), jt_(&jt), cfg_(cfg), seed_(seed) {
    const Eigen::MatrixXd w = jt.jti();
    std::vector<double> flat(size_t(w.size()));
    for (Eigen::Index k = 0; k < w.size(); ++k) flat[size_t(k)] = w.data()[k];
    single_ = std::discrete_distribution<int>(flat.begin(), flat.end());
  }

  void draw(int n, std::mt19937_64& rng, std::vector<int>& s, std::vector<int>& i) {
    s.resize(size_t(n));
    i.resize(size_t(n));
    const int N = jt_->grid.n_points;
    if (n == 1) {
      const int k = single_(rng);
      s[0] = k % N;
      i[0] = k / N;
      return;
    }
    if (n <= cfg_.n_perm) {
      auto& c = chain(n);
      c.advance(static_cast<long>(cfg_.sweeps_per_draw) * 2 * n);
      s = c.signal();
      i = c.idler();
      return;
    }
    auto& m = one_body(n);
    for (int k = 0; k < n; ++k) {
      s[size_t(k)] = m.first(rng);
      i[size_t(k)] = m.second(rng);
    }
  }

  std::vector<double> acceptance() const {
    std::vector<double> a;
    for (const auto& [n, c] : chains_) a.push_back(c->acceptance_rate());
    return a;
  }

 private:
  PermanentChain& chain(int n) {
    auto it = chains_.find(n);
    if (it == chains_.end()) {
      auto c = std::make_unique<PermanentChain>(jt_->j_matrix, n, seed_);
      c->advance(static_cast<long>(cfg_.burn_in_sweeps) * 2 * n);
      it = chains_.emplace(n, std::move(c)).first;
    }
    return *it->second;
  }

  using Pair = std::pair<std::discrete_distribution<int>, std::discrete_distribution<int>>;
  Pair& one_body(int n) {
    auto it = marg_.find(n);
    if (it == marg_.end()) {
      const auto [ps, pi] = n_pair_one_body(*d_, n);
      it = marg_.emplace(n, Pair{std::discrete_distribution<int>(ps.data(), ps.data() + ps.size()),
                                 std::discrete_distribution<int>(pi.data(), pi.data() + pi.size())})
               .first;
    }
    return it->second;
  }

  const SchmidtDecomposition* d_;
  const JointTemporalAmplitude* jt_;
  SynthConfig cfg_;
  uint64_t seed_;
  std::discrete_distribution<int> single_;
  std::map<int, std::unique_ptr<PermanentChain>> chains_;
  std::map<int, Pair> marg_;
};

// Port index per photon, or -1 if lost.
inline int thin_photon(const std::vector<double>& cum, double u) {
  for (size_t k = 0; k < cum.size(); ++k)
    if (u < cum[k]) return static_cast<int>(k);
  return -1;
}

}  // namespace detail

inline TimeTagStream synthesize(const SchmidtDecomposition& d, const JointTemporalAmplitude& jt,
                                const DetectionModel& model, int64_t n_pulses, uint64_t seed,
                                const SynthConfig& cfg = {}, SynthReport* report = nullptr) {
  model.validate();
  require(n_pulses >= 0, ErrorKind::invalid_parameter, "n_pulses must be >= 0");
  require(jt.grid == d.grid, ErrorKind::grid_mismatch, "JTA and decomposition grids differ");
  const auto r = rn_from_schmidt(d, cfg.n_max);
  SynthReport rep;
  rep.r = r;
  if (r.tail >= 1e-4)
    rep.warning = "r_n tail " + std::to_string(r.tail) + " beyond n_max " +
                  std::to_string(cfg.n_max) + " is not sampled";
  std::seed_seq sq{seed, uint64_t(0xe7e7)};
  std::mt19937_64 rng(sq);
  std::discrete_distribution<int> pick_n(r.r.begin(), r.r.end());
  detail::PairSampler sampler(d, jt, cfg, seed);
  std::vector<double> cum_s, cum_i;
  double acc = 0.0;
  for (double e : model.eta_s) cum_s.push_back(acc += e);
  acc = 0.0;
  for (double e : model.eta_i) cum_i.push_back(acc += e);
  const int ns = static_cast<int>(model.eta_s.size());
  const TimeGrid& g = jt.grid;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  TimeTagStream out;
  out.n_pulses = n_pulses;
  std::vector<int> si, ii;
  struct Photon {
    int channel;
    int bin;
    int64_t t;
    double key;
  };
  std::vector<Photon> photons;
  for (int64_t pulse = 0; pulse < n_pulses; ++pulse) {
    const int n = pick_n(rng);
    if (n == 0) continue;
    sampler.draw(n, rng, si, ii);
    photons.clear();
    auto add = [&](int idx, int channel) {
      const double t = std::floor(g.t_start + (idx + u(rng)) * g.dt);
      const double key = cfg.earliest_click ? t : u(rng);
      photons.push_back({channel, idx, static_cast<int64_t>(t), key});
    };
    for (int k = 0; k < n; ++k) {
      const int port = detail::thin_photon(cum_s, u(rng));
      if (port >= 0) add(si[size_t(k)], port + 1);
    }
    for (int k = 0; k < n; ++k) {
      const int port = detail::thin_photon(cum_i, u(rng));
      if (port >= 0) add(ii[size_t(k)], ns + port + 1);
    }
    if (cfg.clicks == ClickModel::one_per_pulse) {
      std::stable_sort(photons.begin(), photons.end(), [](const Photon& a, const Photon& b) {
        return a.channel != b.channel ? a.channel < b.channel : a.key < b.key;
      });
      for (size_t k = 0; k < photons.size(); ++k)
        if (k == 0 || photons[k].channel != photons[k - 1].channel)
          out.records.push_back({pulse, photons[k].channel, photons[k].t});
    } else {
      std::stable_sort(photons.begin(), photons.end(), [](const Photon& a, const Photon& b) {
        return a.channel != b.channel ? a.channel < b.channel : a.bin < b.bin;
      });
      for (size_t k = 0; k < photons.size(); ++k)
        if (k == 0 || photons[k].channel != photons[k - 1].channel ||
            photons[k].bin != photons[k - 1].bin)
          out.records.push_back({pulse, photons[k].channel, photons[k].t});
    }
  }
  rep.acceptance = sampler.acceptance();
  if (report) *report = std::move(rep);
  return out;
}

inline void write_stream_csv(std::ostream& os, const TimeTagStream& s) {
  os << "# n_pulses=" << s.n_pulses << '\n';
  os << "pulse,channel,time_ps\n";
  for (const auto& r : s.records) os << r.pulse << ',' << r.channel << ',' << r.time_ps << '\n';
}

inline TimeTagStream ingest(std::istream& is) {
  TimeTagStream s;
  std::string line;
  int64_t data_lines = 0;
  int64_t declared = -1;
  bool header_seen = false;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string key = "# n_pulses=";
      if (line.rfind(key, 0) == 0) {
        try {
          declared = std::stoll(line.substr(key.size()));
        } catch (const std::exception&) {
          throw Error(ErrorKind::parse, "bad n_pulses comment: " + line);
        }
      }
      continue;
    }
    if (!header_seen && line == "pulse,channel,time_ps") {
      header_seen = true;
      continue;
    }
    ++data_lines;
    TimeTag t;
    const char* p = line.data();
    const char* end = p + line.size();
    bool ok = true;
    auto field = [&](auto& v, bool last) {
      auto [q, ec] = std::from_chars(p, end, v);
      if (ec != std::errc{} || (last ? q != end : (q == end || *q != ','))) ok = false;
      p = last ? q : q + 1;
    };
    field(t.pulse, false);
    if (ok) field(t.channel, false);
    if (ok) field(t.time_ps, true);
    if (!ok || t.pulse < 0) {
      ++s.malformed_lines;
      continue;
    }
    if (!s.records.empty() && t.pulse < s.records.back().pulse)
      throw Error(ErrorKind::format, "pulse index decreases at line " + std::to_string(data_lines));
    s.records.push_back(t);
  }
  if (data_lines > 0 && double(s.malformed_lines) > 1e-3 * double(data_lines))
    throw Error(ErrorKind::parse, std::to_string(s.malformed_lines) + " of " +
                                      std::to_string(data_lines) + " lines malformed");
  const int64_t implied = s.records.empty() ? 0 : s.records.back().pulse + 1;
  if (declared >= 0) {
    require(declared >= implied, ErrorKind::format, "n_pulses smaller than the largest pulse index");
    s.n_pulses = declared;
  } else {
    s.n_pulses = implied;
  }
  return s;
}

inline TimeTagStream ingest(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), ErrorKind::config, "cannot open " + path);
  return ingest(f);
}

struct CoincidenceHistograms {
  Eigen::MatrixXd h2, h4m, h6m;
  int64_t n_pulses = 0;
  TimeGrid grid;
  std::map<int, Eigen::VectorXd> singles;  // per channel
  int64_t out_of_grid = 0;

  CoincidenceHistograms& operator+=(const CoincidenceHistograms& o) {
    require(grid == o.grid, ErrorKind::grid_mismatch, "histograms on different grids");
    h2 += o.h2;
    h4m += o.h4m;
    h6m += o.h6m;
    n_pulses += o.n_pulses;
    out_of_grid += o.out_of_grid;
    for (const auto& [c, v] : o.singles) {
      auto it = singles.find(c);
      if (it == singles.end()) singles[c] = v;
      else it->second += v;
    }
    return *this;
  }
};

namespace detail {

inline void accumulate_pulse(const std::vector<int>& s, const std::vector<int>& i,
                             CoincidenceHistograms& h) {
  for (int q : s)
    for (int p : i) h.h2(q, p) += 1.0;
  const size_t ns = s.size(), ni = i.size();
  if (ns >= 2 && ni >= 2)
    for (size_t a = 0; a < ns; ++a)
      for (size_t b = a + 1; b < ns; ++b)
        for (size_t c = 0; c < ni; ++c)
          for (size_t e = c + 1; e < ni; ++e)
            for (int q : {s[a], s[b]})
              for (int p : {i[c], i[e]}) h.h4m(q, p) += 1.0;
  if (ns >= 3 && ni >= 3)
    for (size_t a = 0; a < ns; ++a)
      for (size_t b = a + 1; b < ns; ++b)
        for (size_t b2 = b + 1; b2 < ns; ++b2)
          for (size_t c = 0; c < ni; ++c)
            for (size_t e = c + 1; e < ni; ++e)
              for (size_t e2 = e + 1; e2 < ni; ++e2)
                for (int q : {s[a], s[b], s[b2]})
                  for (int p : {i[c], i[e], i[e2]}) h.h6m(q, p) += 1.0;
}

}  // namespace detail

inline CoincidenceHistograms histogram(const TimeTagStream& stream, const TimeGrid& grid,
                                       const PortMap& ports) {
  grid.validate();
  const int N = grid.n_points;
  CoincidenceHistograms h;
  h.grid = grid;
  h.n_pulses = stream.n_pulses;
  h.h2 = h.h4m = h.h6m = Eigen::MatrixXd::Zero(N, N);
  for (const auto& [c, a] : ports) h.singles[c] = Eigen::VectorXd::Zero(N);
  std::vector<int> s, i;
  size_t k = 0;
  const auto& rec = stream.records;
  while (k < rec.size()) {
    const int64_t pulse = rec[k].pulse;
    s.clear();
    i.clear();
    for (; k < rec.size() && rec[k].pulse == pulse; ++k) {
      const auto it = ports.find(rec[k].channel);
      if (it == ports.end())
        throw Error(ErrorKind::config, "channel " + std::to_string(rec[k].channel) + " not mapped");
      const int bin = static_cast<int>(std::floor((double(rec[k].time_ps) - grid.t_start) / grid.dt));
      if (bin < 0 || bin >= N) {
        ++h.out_of_grid;
        continue;
      }
      h.singles[rec[k].channel][bin] += 1.0;
      (it->second.role == Role::signal ? s : i).push_back(bin);
    }
    detail::accumulate_pulse(s, i, h);
  }
  return h;
}

// Per-port efficiency from singles rates and the pair-number distribution. With one click
// per port and pulse the click probability sum_n r_n (1 - (1 - eta)^n) is inverted.
inline DetectionModel fit_detection_model(const CoincidenceHistograms& h, const PortMap& ports,
                                          const PairNumberDistribution& r,
                                          ClickModel clicks = ClickModel::one_per_pulse) {
  const double mean_pairs = r.mean();
  require(h.n_pulses > 0 && mean_pairs > 0.0, ErrorKind::invalid_parameter,
          "need pulses and a positive mean pair number");
  auto click_prob = [&](double eta) {
    double p = 0.0;
    for (size_t n = 1; n < r.r.size(); ++n) p += r.r[n] * (1.0 - std::pow(1.0 - eta, double(n)));
    return p;
  };
  DetectionModel m;
  for (const auto& [c, a] : ports) {
    auto& v = a.role == Role::signal ? m.eta_s : m.eta_i;
    if (static_cast<int>(v.size()) <= a.detector) v.resize(size_t(a.detector) + 1, 0.0);
    const auto it = h.singles.find(c);
    const double rate = (it == h.singles.end() ? 0.0 : it->second.sum()) / double(h.n_pulses);
    double eta = rate / mean_pairs;
    if (clicks == ClickModel::one_per_pulse) {
      double lo = 0.0, hi = 1.0;
      if (rate >= click_prob(1.0)) {
        eta = 1.0;
      } else {
        for (int k = 0; k < 100; ++k) {
          const double mid = 0.5 * (lo + hi);
          (click_prob(mid) < rate ? lo : hi) = mid;
        }
        eta = 0.5 * (lo + hi);
      }
    }
    v[size_t(a.detector)] = std::min(eta, 1.0);
  }
  return m;
}

struct PortCorrelation {
  double g2 = 0.0;
  double std_error = 0.0;
};

// g2 between two channels from per-pulse click counts, error from 20 batches of pulses.
inline PortCorrelation cross_port_g2(const TimeTagStream& stream, int ch_a, int ch_b) {
  constexpr int kBatches = 20;
  require(stream.n_pulses >= kBatches, ErrorKind::invalid_parameter, "too few pulses");
  std::vector<double> na(kBatches, 0.0), nb(kBatches, 0.0), nab(kBatches, 0.0), np(kBatches, 0.0);
  auto batch = [&](int64_t pulse) { return static_cast<size_t>(pulse * kBatches / stream.n_pulses); };
  for (int64_t p = 0; p < stream.n_pulses; ++p) np[batch(p)] += 1.0;
  size_t k = 0;
  const auto& rec = stream.records;
  while (k < rec.size()) {
    const int64_t pulse = rec[k].pulse;
    double ca = 0.0, cb = 0.0;
    for (; k < rec.size() && rec[k].pulse == pulse; ++k) {
      ca += rec[k].channel == ch_a;
      cb += rec[k].channel == ch_b;
    }
    const size_t b = batch(pulse);
    na[b] += ca;
    nb[b] += cb;
    nab[b] += ca * cb;
  }
  auto g2_of = [](double n, double a, double b, double ab) { return a > 0 && b > 0 ? n * ab / (a * b) : 0.0; };
  double sa = 0, sb = 0, sab = 0, sn = 0;
  for (int b = 0; b < kBatches; ++b) {
    sa += na[size_t(b)];
    sb += nb[size_t(b)];
    sab += nab[size_t(b)];
    sn += np[size_t(b)];
  }
  PortCorrelation res;
  res.g2 = g2_of(sn, sa, sb, sab);
  // jackknife over batches
  std::vector<double> jk(kBatches);
  double mean = 0.0;
  for (int b = 0; b < kBatches; ++b) {
    jk[size_t(b)] = g2_of(sn - np[size_t(b)], sa - na[size_t(b)], sb - nb[size_t(b)],
                          sab - nab[size_t(b)]);
    mean += jk[size_t(b)] / kBatches;
  }
  double var = 0.0;
  for (double v : jk) var += (v - mean) * (v - mean);
  res.std_error = std::sqrt(var * (kBatches - 1.0) / kBatches);
  return res;
}

inline void write_histogram_csv(std::ostream& os, const Eigen::MatrixXd& h, const TimeGrid& g) {
  os << "t_s_ps";
  for (int p = 0; p < g.n_points; ++p) os << ',' << g.time(p);
  os << '\n';
  os.precision(12);
  for (int q = 0; q < g.n_points; ++q) {
    os << g.time(q);
    for (int p = 0; p < g.n_points; ++p) os << ',' << h(q, p);
    os << '\n';
  }
}

struct HistogramFile {
  Eigen::MatrixXd h;
  TimeGrid grid;
};

// Reads the write_histogram_csv layout; '#' lines are skipped.
inline HistogramFile read_histogram_csv(std::istream& is) {
  std::vector<std::vector<double>> rows;
  std::string line;
  bool header = false;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    bool first = true;
    while (std::getline(ss, cell, ',')) {
      if (!header && first) {
        require(cell == "t_s_ps", ErrorKind::format, "histogram CSV must start with t_s_ps");
        first = false;
        continue;
      }
      first = false;
      try {
        size_t used = 0;
        v.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw Error(ErrorKind::parse, "bad histogram cell '" + cell + "'");
      }
    }
    if (!header) {
      header = true;
      rows.push_back(v);
      continue;
    }
    rows.push_back(v);
  }
  require(header && rows.size() >= 3, ErrorKind::format, "histogram CSV needs a header and 2 rows");
  const auto& times = rows[0];
  const int n = static_cast<int>(times.size());
  require(static_cast<int>(rows.size()) == n + 1, ErrorKind::format, "histogram CSV is not square");
  HistogramFile f;
  f.grid = TimeGrid{times[0], times[1] - times[0], n};
  f.h.resize(n, n);
  for (int q = 0; q < n; ++q) {
    const auto& r = rows[size_t(q) + 1];
    require(static_cast<int>(r.size()) == n + 1, ErrorKind::format, "histogram row length mismatch");
    require(std::abs(r[0] - f.grid.time(q)) <= 1e-6 * std::max(1.0, std::abs(r[0])),
            ErrorKind::format, "histogram row times are not uniform");
    for (int p = 0; p < n; ++p) f.h(q, p) = r[size_t(p) + 1];
  }
  return f;
}

inline nlohmann::json histogram_metadata(const CoincidenceHistograms& h, const PortMap& ports) {
  nlohmann::json j;
  j["grid"] = {{"t_start_ps", h.grid.t_start}, {"dt_ps", h.grid.dt}, {"n_points", h.grid.n_points}};
  j["n_pulses"] = h.n_pulses;
  j["out_of_grid_clicks"] = h.out_of_grid;
  j["pairing_convention"] = "all pairings";
  nlohmann::json pm = nlohmann::json::object();
  for (const auto& [c, a] : ports)
    pm[std::to_string(c)] = {{"role", a.role == Role::signal ? "signal" : "idler"},
                             {"detector", a.detector}};
  j["port_map"] = pm;
  j["totals"] = {{"h2", h.h2.sum()}, {"h4m", h.h4m.sum()}, {"h6m", h.h6m.sum()}};
  return j;
}

}  // namespace sqz

#endif
