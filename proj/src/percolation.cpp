#include "brwd/percolation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "brwd/parallel.hpp"
#include "brwd/stats.hpp"

namespace brwd {

bool CopyTarget::contains_site(const Site& x, int dim) const {
  if (x[0] < x1_lo || x[0] > x1_hi) return false;
  for (int i = 1; i < dim; ++i)
    if (std::abs(x[i]) > perp) return false;
  return true;
}

CopyTarget lattice_box(int k, int l, int L, double T) {
  if (k < 0 || l < 0 || l > k) throw std::invalid_argument("lattice_box: need 0 <= l <= k");
  const std::int32_t c = L * (4 * l - 2 * k);
  return {5.0 * T * k, 5.0 * T * (k + 1), c - L, c + L, L};
}

namespace {

// Calls fn on every offset of {-r..r}^dim in lexicographic order.
template <class Fn>
void for_cube(int dim, int r, Fn&& fn) {
  Site off{};
  for (int i = 0; i < dim; ++i) off[i] = -r;
  for (;;) {
    fn(off);
    int i = dim - 1;
    while (i >= 0 && off[i] == r) off[i--] = -r;
    if (i < 0) return;
    ++off[i];
  }
}

template <class CountFn>
bool is_copy(int dim, int n, std::int64_t threshold, const Site& x, CountFn&& count) {
  bool ok = true;
  for_cube(dim, n, [&](const Site& off) {
    if (ok && count(x + off) < threshold) ok = false;
  });
  return ok;
}

// Smallest x whose copy lies entirely in place, scanning the target's sites.
template <class CountFn>
std::optional<Site> scan_target(int dim, const CopyTarget& tg, int n, std::int64_t threshold, CountFn&& count) {
  Site x{};
  for (int i = 1; i < dim; ++i) x[i] = -tg.perp;
  x[0] = tg.x1_lo;
  // Lexicographic walk: first coordinate slowest.
  for (;;) {
    if (is_copy(dim, n, threshold, x, count)) return x;
    int i = dim - 1;
    while (i >= 1 && x[i] == tg.perp) x[i--] = -tg.perp;
    if (i >= 1) {
      ++x[i];
      continue;
    }
    if (x[0] == tg.x1_hi) return std::nullopt;
    ++x[0];
  }
}

void check_copy_args(int n, std::int64_t threshold) {
  if (n < 0) throw std::invalid_argument("copy detection: n must be nonnegative");
  if (threshold < 1) throw std::invalid_argument("copy detection: threshold must be positive");
}

}  // namespace

std::optional<CopyHit> detect_occupied_copy(const EventLog& log, const CopyTarget& target, int n,
                                            std::int64_t threshold) {
  check_copy_args(n, threshold);
  const int dim = log.dim;
  std::map<Site, std::int64_t> counts;
  std::unordered_map<std::uint64_t, Site> where;
  auto count = [&](const Site& s) {
    const auto it = counts.find(s);
    return it == counts.end() ? std::int64_t{0} : it->second;
  };
  auto remove = [&](std::uint64_t node) {
    const auto it = where.find(node);
    if (it == where.end()) return;
    if (--counts[it->second] == 0) counts.erase(it->second);
    where.erase(it);
  };
  auto apply = [&](const Event& e) {
    switch (e.kind) {
      case EventKind::start:
      case EventKind::birth:
        where[e.node] = e.site;
        ++counts[e.site];
        break;
      case EventKind::jump:
        remove(e.node);
        where[e.node] = e.site;
        ++counts[e.site];
        break;
      case EventKind::exit:
      case EventKind::branch:
      case EventKind::kill:
        remove(e.node);
        break;
      case EventKind::disaster:
        break;
    }
  };
  auto scan = [&](double t) -> std::optional<CopyHit> {
    if (auto x = scan_target(dim, target, n, threshold, count)) return CopyHit{t, *x};
    return std::nullopt;
  };

  std::size_t i = 0;
  while (i < log.events.size() && log.events[i].kind == EventKind::start) apply(log.events[i++]);
  bool window_checked = false;
  if (target.t_lo <= log.start_time && log.start_time <= target.t_hi) {
    window_checked = true;
    if (auto h = scan(log.start_time)) return h;
  }
  for (; i < log.events.size(); ++i) {
    const Event& e = log.events[i];
    if (e.time > target.t_hi) return std::nullopt;
    if (!window_checked && e.time >= target.t_lo) {
      window_checked = true;
      if (auto h = scan(target.t_lo)) return h;
    }
    apply(e);
    if (e.time >= target.t_lo)
      if (auto h = scan(e.time)) return h;
  }
  if (!window_checked && !log.capped && target.t_lo <= log.horizon) return scan(target.t_lo);
  return std::nullopt;
}

namespace {

class CopyDetector final : public SimObserver {
 public:
  CopyDetector(int dim, int n, std::int64_t threshold, const std::vector<CopyTarget>& targets)
      : dim_(dim), n_(n), threshold_(threshold), targets_(targets), hits_(targets.size()) {
    for (const auto& t : targets_) starts_.push_back(t.t_lo);
    std::sort(starts_.begin(), starts_.end());
    starts_.erase(std::unique(starts_.begin(), starts_.end()), starts_.end());
    for (const auto& t : targets_) {
      x1_lo_ = std::min(x1_lo_, t.x1_lo);
      x1_hi_ = std::max(x1_hi_, t.x1_hi);
      perp_ = std::max(perp_, t.perp);
    }
  }

  void on_start(double t, const PopulationView& pop) override {
    auto count = [&](const Site& s) { return pop.count_at(s); };
    pop.for_each_occupied([&](const Site& s, std::int64_t c) {
      if (c < threshold_) return;
      for_cube(dim_, n_, [&](const Site& off) {
        const Site x = s - off;
        if (in_strip(x) && !live_.count(x) && is_copy(dim_, n_, threshold_, x, count)) live_.insert(x);
      });
    });
    while (next_start_ < starts_.size() && starts_[next_start_] <= t) ++next_start_;
    for (const auto& x : live_) record(t, x);
    last_time_ = t;
  }

  void on_event(const Event& ev, const PopulationView& pop) override {
    const double t = ev.time;
    // live_ still describes the state before this event, which is the state
    // at any window start passed since the previous event.
    open_windows(t);
    auto count = [&](const Site& s) { return pop.count_at(s); };
    std::vector<Site> gone;
    for_cube(dim_, n_ + 1, [&](const Site& off) {
      const Site x = ev.site + off;
      if (live_.count(x) && !is_copy(dim_, n_, threshold_, x, count)) gone.push_back(x);
    });
    for (const auto& x : gone) live_.erase(x);
    if (ev.kind == EventKind::jump || ev.kind == EventKind::birth) {
      std::vector<Site> fresh;
      for_cube(dim_, n_, [&](const Site& off) {
        const Site x = ev.site - off;
        if (in_strip(x) && !live_.count(x) && is_copy(dim_, n_, threshold_, x, count)) fresh.push_back(x);
      });
      std::sort(fresh.begin(), fresh.end());
      for (const auto& x : fresh) {
        live_.insert(x);
        record(t, x);
      }
    }
    last_time_ = t;
  }

  bool stop_requested() const override { return found_ == targets_.size(); }

  void finish(double horizon) { open_windows(horizon); }

  std::vector<std::optional<CopyHit>> hits() const { return hits_; }

 private:
  bool in_strip(const Site& x) const {
    if (x[0] < x1_lo_ || x[0] > x1_hi_) return false;
    for (int i = 1; i < dim_; ++i)
      if (std::abs(x[i]) > perp_) return false;
    return true;
  }

  void open_windows(double t) {
    while (next_start_ < starts_.size() && starts_[next_start_] <= t) {
      const double w = starts_[next_start_++];
      for (std::size_t j = 0; j < targets_.size(); ++j) {
        if (hits_[j] || targets_[j].t_lo != w) continue;
        for (const auto& x : live_)
          if (targets_[j].contains_site(x, dim_)) {
            hits_[j] = CopyHit{w, x};
            ++found_;
            break;
          }
      }
    }
  }

  void record(double t, const Site& x) {
    for (std::size_t j = 0; j < targets_.size(); ++j) {
      const auto& tg = targets_[j];
      if (hits_[j] || t < tg.t_lo || t > tg.t_hi || !tg.contains_site(x, dim_)) continue;
      hits_[j] = CopyHit{t, x};
      ++found_;
    }
  }

  int dim_, n_;
  std::int64_t threshold_;
  const std::vector<CopyTarget>& targets_;
  std::vector<std::optional<CopyHit>> hits_;
  std::size_t found_ = 0;
  std::vector<double> starts_;
  std::size_t next_start_ = 0;
  std::set<Site> live_;
  std::int32_t x1_lo_ = std::numeric_limits<std::int32_t>::max();
  std::int32_t x1_hi_ = std::numeric_limits<std::int32_t>::min();
  std::int32_t perp_ = 0;
  double last_time_ = 0.0;
};

}  // namespace

CopySearch detect_occupied_copies(const BrwParams& params, const Configuration& eta, DisasterCache& cache,
                                  const SimOptions& opt, std::uint64_t seed, const std::vector<CopyTarget>& targets,
                                  int n, std::int64_t threshold) {
  check_copy_args(n, threshold);
  CopySearch out;
  if (targets.empty()) return out;
  CopyDetector det(params.dim, n, threshold, targets);
  SimOptions o = opt;
  o.observer = &det;
  o.record_log = false;
  const auto res = simulate(params, eta, cache, o, seed);
  if (!res.capped && !res.stopped) det.finish(o.horizon);
  out.hits = det.hits();
  out.capped = res.capped;
  out.end_time = res.end_time;
  return out;
}

PercLattice::PercLattice(int rows) : K(rows), row_capped(static_cast<std::size_t>(rows) + 1, 0) {
  if (rows < 0) throw std::invalid_argument("PercLattice: negative row count");
  for (int k = 0; k <= rows; ++k) {
    occupied.emplace_back(k + 1, 0);
    open.emplace_back(k + 1, 0);
    attempted.emplace_back(k + 1, 0);
    hits.emplace_back(k + 1);
  }
}

bool PercLattice::reaches_row(int k) const {
  if (k < 0 || k > K) throw std::out_of_range("PercLattice: row");
  return std::any_of(open[k].begin(), open[k].end(), [](char c) { return c != 0; });
}

void open_closure(PercLattice& lat) {
  lat.open[0][0] = 1;
  lat.attempted[0][0] = 1;
  for (int k = 1; k <= lat.K; ++k)
    for (int l = 0; l <= k; ++l) {
      const bool pred = (l < k && lat.open[k - 1][l]) || (l >= 1 && lat.open[k - 1][l - 1]);
      lat.attempted[k][l] = pred;
      lat.open[k][l] = pred && lat.occupied[k][l];
    }
}

namespace {

void check_perc_options(const BrwParams& params, const PercOptions& opt) {
  params.validate();
  if (opt.L < 1) throw std::invalid_argument("percolation: L must be at least 1");
  if (!(opt.T > 0.0)) throw std::invalid_argument("percolation: T must be positive");
  if (opt.n < 0 || opt.S < 1 || opt.K < 0) throw std::invalid_argument("percolation: need n >= 0, S >= 1, K >= 0");
}

PercLattice build_global(const BrwParams& params, DisasterCache& cache, const PercOptions& opt, std::uint64_t seed) {
  PercLattice lat(opt.K);
  std::vector<CopyTarget> targets;
  for (int k = 0; k <= opt.K; ++k)
    for (int l = 0; l <= k; ++l) targets.push_back(lattice_box(k, l, opt.L, opt.T));
  SimOptions so;
  so.horizon = 5.0 * opt.T * (opt.K + 1);
  so.caps = opt.caps;
  const std::int64_t per_site = std::int64_t{opt.S} * opt.S;
  const auto res = detect_occupied_copies(params, block_configuration(params.dim, opt.n, per_site), cache, so, seed,
                                          targets, opt.n, per_site);
  std::size_t j = 0;
  for (int k = 0; k <= opt.K; ++k) {
    for (int l = 0; l <= k; ++l, ++j) {
      lat.hits[k][l] = res.hits[j];
      lat.occupied[k][l] = res.hits[j].has_value();
    }
    if (res.capped && 5.0 * opt.T * (k + 1) > res.end_time) lat.row_capped[k] = 1;
  }
  open_closure(lat);
  return lat;
}

PercLattice build_truncated(const BrwParams& params, DisasterCache& cache, const PercOptions& opt,
                            std::uint64_t seed) {
  PercLattice lat(opt.K);
  const std::int64_t per_site = std::int64_t{opt.S} * opt.S;
  lat.occupied[0][0] = 1;
  lat.open[0][0] = 1;
  lat.attempted[0][0] = 1;
  lat.hits[0][0] = CopyHit{0.0, Site{}};
  for (int k = 0; k < opt.K; ++k)
    for (int l = 0; l <= k + 1; ++l) {
      const CopyHit* src = nullptr;
      if (l <= k && lat.open[k][l]) src = &*lat.hits[k][l];
      else if (l >= 1 && lat.open[k][l - 1]) src = &*lat.hits[k][l - 1];
      if (!src) continue;
      lat.attempted[k + 1][l] = 1;
      Region region{params.dim, src->x, src->x};
      region.lo[0] -= 5 * opt.L;
      region.hi[0] += 5 * opt.L;
      for (int i = 1; i < params.dim; ++i) {
        region.lo[i] -= 3 * opt.L;
        region.hi[i] += 3 * opt.L;
      }
      SimOptions so;
      so.start_time = src->time;
      so.horizon = 5.0 * opt.T * (k + 2);
      so.truncation = region;
      so.caps = opt.caps;
      const std::vector<CopyTarget> target{lattice_box(k + 1, l, opt.L, opt.T)};
      const auto res = detect_occupied_copies(params, block_configuration(params.dim, opt.n, per_site, src->x), cache,
                                              so, derive_seed(seed, static_cast<std::uint64_t>(k + 1),
                                                              static_cast<std::uint64_t>(l)),
                                              target, opt.n, per_site);
      if (res.capped) lat.row_capped[k + 1] = 1;
      if (res.hits.front()) {
        lat.hits[k + 1][l] = res.hits.front();
        lat.occupied[k + 1][l] = 1;
        lat.open[k + 1][l] = 1;
      }
    }
  open_closure(lat);
  return lat;
}

}  // namespace

PercLattice build_eta_from_brw(const BrwParams& params, const DisasterField& field, const PercOptions& opt,
                               std::uint64_t seed) {
  check_perc_options(params, opt);
  if (field.dimension() != params.dim) throw std::invalid_argument("build_eta_from_brw: dimension mismatch");
  DisasterCache cache(field);
  return opt.construction == PercConstruction::global ? build_global(params, cache, opt, seed)
                                                      : build_truncated(params, cache, opt, seed);
}

PercLattice independent_lattice(double p, int K, std::uint64_t seed, std::size_t rep) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("independent_lattice: p outside [0,1]");
  PercLattice lat(K);
  CounterStream u(derive_seed(seed, "perc-uniforms", rep));
  for (int k = 0; k <= K; ++k)
    for (int l = 0; l <= k; ++l) {
      const double x = uniform01(u);
      lat.occupied[k][l] = (k == 0 && l == 0) || x < p;
    }
  open_closure(lat);
  return lat;
}

std::vector<PercSurvival> independent_perc(const std::vector<double>& ps, int K, std::size_t n_reps,
                                           std::uint64_t seed, int threads) {
  if (n_reps == 0) throw std::invalid_argument("independent_perc: need replicas");
  const auto reached = parallel_map(n_reps, threads, [&](std::size_t r) {
    std::vector<char> v;
    for (double p : ps) v.push_back(independent_lattice(p, K, seed, r).reaches_row(K));
    return v;
  });
  std::vector<PercSurvival> out;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    std::size_t hits = 0;
    for (const auto& v : reached) hits += v[i];
    PercSurvival s;
    s.p = ps[i];
    s.estimate.n_samples = n_reps;
    s.estimate.value = static_cast<double>(hits) / static_cast<double>(n_reps);
    s.estimate.std_err = binomial_std_error(s.estimate.value, n_reps);
    out.push_back(s);
  }
  return out;
}

DependenceProbe dependence_range_probe(const std::function<PercLattice(std::size_t)>& lattice, int row,
                                       int distance, std::size_t n_reps, int threads) {
  if (distance < 1 || row < distance) throw std::invalid_argument("dependence_range_probe: need 1 <= distance <= row");
  const std::size_t span = static_cast<std::size_t>(row - distance + 1);
  struct Pair {
    bool valid = false;
    double a = 0, b = 0;
  };
  const auto pairs = parallel_map(n_reps, threads, [&](std::size_t r) {
    const auto lat = lattice(r);
    if (lat.K < row) throw std::invalid_argument("dependence_range_probe: lattice too short");
    const int l = static_cast<int>(r % span);
    Pair p;
    p.valid = lat.attempted[row][l] && lat.attempted[row][l + distance] && !lat.row_capped[row];
    p.a = lat.occupied[row][l];
    p.b = lat.occupied[row][l + distance];
    return p;
  });
  std::vector<double> xs, ys;
  for (const auto& p : pairs)
    if (p.valid) {
      xs.push_back(p.a);
      ys.push_back(p.b);
    }
  DependenceProbe out;
  out.row = row;
  out.distance = distance;
  out.n_pairs = xs.size();
  if (xs.size() < 4) throw std::runtime_error("dependence_range_probe: fewer than four attempted pairs");
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out.mean_first += xs[i];
    out.mean_second += ys[i];
  }
  out.mean_first /= static_cast<double>(xs.size());
  out.mean_second /= static_cast<double>(xs.size());
  out.correlation = pearson_correlation(xs, ys);
  out.std_err = 1.0 / std::sqrt(static_cast<double>(xs.size()) - 3.0);
  return out;
}

PercLattice brw_lattice_replica(const BrwParams& params, const PercOptions& opt, std::uint64_t seed,
                                std::size_t rep) {
  const DisasterField field(derive_seed(seed, "perc-field", rep), params.alpha, params.dim);
  return build_eta_from_brw(params, field, opt, derive_seed(seed, "perc-tree", rep));
}

SurvivalEstimate brw_perc_survival(const BrwParams& params, const PercOptions& opt, std::size_t n_reps,
                                   std::uint64_t seed, int threads) {
  if (n_reps == 0) throw std::invalid_argument("brw_perc_survival: need replicas");
  const auto reached = parallel_map(n_reps, threads, [&](std::size_t r) {
    return static_cast<char>(brw_lattice_replica(params, opt, seed, r).reaches_row(opt.K));
  });
  std::size_t hits = 0;
  for (char c : reached) hits += c;
  SurvivalEstimate e;
  e.n_samples = n_reps;
  e.value = static_cast<double>(hits) / static_cast<double>(n_reps);
  e.std_err = binomial_std_error(e.value, n_reps);
  return e;
}

void write_lattice(std::ostream& os, const PercLattice& lat) {
  os << "k,l,occupied,open\n";
  for (int k = 0; k <= lat.K; ++k)
    for (int l = 0; l <= k; ++l)
      os << k << ',' << l << ',' << int{lat.occupied[k][l]} << ',' << int{lat.open[k][l]} << '\n';
}

}  // namespace brwd
