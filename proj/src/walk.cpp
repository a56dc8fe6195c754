#include "brwd/walk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "brwd/parallel.hpp"
#include "brwd/stats.hpp"

namespace brwd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_rate(double kappa) {
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw std::invalid_argument("jump rate must be finite and >= 0");
}

SurvivalEstimate make_estimate(std::size_t hits, std::size_t n) {
  SurvivalEstimate e;
  e.n_samples = n;
  e.value = static_cast<double>(hits) / static_cast<double>(n);
  e.std_err = binomial_std_error(e.value, n);
  return e;
}

}  // namespace

Site WalkPath::position_at(double t) const {
  Site s = start;
  for (const auto& j : jumps) {
    if (j.time > t) break;
    s = j.site;
  }
  return s;
}

WalkPath simulate_walk(double kappa, int dim, double horizon, Rng& rng, const Site& start) {
  check_rate(kappa);
  check_dimension(dim);
  if (!(horizon >= 0.0)) throw std::invalid_argument("horizon must be >= 0");
  WalkPath p;
  p.dim = dim;
  p.start = start;
  p.horizon = horizon;
  if (kappa == 0.0) return p;
  const auto dirs = static_cast<std::uint32_t>(2 * dim);
  double t = 0.0;
  Site x = start;
  for (;;) {
    t += exponential(rng, kappa);
    if (t > horizon) break;
    x = neighbor(x, static_cast<int>(uniform_index(rng, dirs)));
    p.jumps.push_back({t, x});
  }
  return p;
}

std::optional<double> extinction_time(const WalkPath& path, DisasterCache& cache) {
  if (cache.field().dimension() != path.dim) throw std::invalid_argument("extinction_time: dimension mismatch");
  Site x = path.start;
  double a = 0.0;
  for (std::size_t i = 0; i <= path.jumps.size(); ++i) {
    const bool last = (i == path.jumps.size());
    const double b = last ? path.horizon : path.jumps[i].time;
    const double d = cache.first_at_or_after(x, a);
    // The site is left at b, so a disaster at b strikes only on the last interval.
    if (last ? d <= b : d < b) return d;
    if (!last) {
      x = path.jumps[i].site;
      a = b;
    }
  }
  return std::nullopt;
}

std::optional<double> extinction_time(const WalkPath& path, const DisasterField& field) {
  DisasterCache cache(field);
  return extinction_time(path, cache);
}

bool walker_survives(DisasterCache& cache, double kappa, double t, Rng& rng, Site* final_site, const Site& start) {
  const auto dirs = static_cast<std::uint32_t>(2 * cache.field().dimension());
  Site x = start;
  double a = 0.0;
  for (;;) {
    const double b = kappa > 0.0 ? a + exponential(rng, kappa) : kInf;
    const double d = cache.first_at_or_after(x, a);
    if (b > t) {
      if (final_site) *final_site = x;
      // tau >= t: a hit exactly at t still counts as survival up to t.
      return d >= t;
    }
    if (d < b) return false;
    x = neighbor(x, static_cast<int>(uniform_index(rng, dirs)));
    a = b;
  }
}

SurvivalEstimate estimate_survival(DisasterCache& cache, double kappa, double t, std::size_t n_walkers,
                                   bool pin_to_origin, Rng& rng) {
  check_rate(kappa);
  if (n_walkers < 1) throw std::invalid_argument("n_walkers must be >= 1");
  if (!(t >= 0.0)) throw std::invalid_argument("t must be >= 0");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n_walkers; ++i) {
    Site end;
    if (walker_survives(cache, kappa, t, rng, &end) && (!pin_to_origin || end == Site{})) ++hits;
  }
  return make_estimate(hits, n_walkers);
}

SurvivalEstimate estimate_survival(const DisasterField& field, double kappa, double t, std::size_t n_walkers,
                                   bool pin_to_origin, Rng& rng) {
  DisasterCache cache(field);
  return estimate_survival(cache, kappa, t, n_walkers, pin_to_origin, rng);
}

SurvivalEstimate annealed_survival(double kappa, double alpha, int dim, double t, std::size_t n_samples,
                                   std::uint64_t seed) {
  check_rate(kappa);
  if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
  Rng rng(derive_seed(seed, "annealed-walk"));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    DisasterCache cache(DisasterField(derive_seed(seed, "annealed-env", i), alpha, dim));
    if (walker_survives(cache, kappa, t, rng)) ++hits;
  }
  return make_estimate(hits, n_samples);
}

int default_solver_radius(double kappa, double t, int dim) {
  check_dimension(dim);
  return static_cast<int>(std::ceil(6.0 * std::sqrt(kappa * t / dim) + 10.0));
}

namespace {

// Sub-probability vector on the box with absorbing boundary.
class BoxOperator {
 public:
  BoxOperator(int dim, int radius) : dim_(dim), side_(2 * radius + 1) {
    stride_[0] = 1;
    for (int i = 1; i < dim; ++i) stride_[i] = stride_[i - 1] * side_;
    cells_ = stride_[dim - 1] * side_;
  }

  std::size_t cells() const { return static_cast<std::size_t>(cells_); }

  long index(const Site& s, int radius) const {
    long idx = 0;
    for (int i = 0; i < dim_; ++i) {
      const int c = s[i] + radius;
      if (c < 0 || c >= side_) return -1;
      idx += static_cast<long>(c) * stride_[i];
    }
    return idx;
  }

  // out = P in, where P averages over the 2d neighbours and mass that would
  // leave the box is dropped.
  void apply(const std::vector<double>& in, std::vector<double>& out) const {
    const double w = 1.0 / (2.0 * dim_);
    std::fill(out.begin(), out.end(), 0.0);
    for (int axis = 0; axis < dim_; ++axis) {
      const long st = stride_[axis];
      const long block = st * side_;
      for (long base = 0; base < cells_; base += block) {
        for (long c = 0; c < side_; ++c) {
          double* o = out.data() + base + c * st;
          if (c > 0) {
            const double* lo = in.data() + base + (c - 1) * st;
            for (long j = 0; j < st; ++j) o[j] += w * lo[j];
          }
          if (c + 1 < side_) {
            const double* hi = in.data() + base + (c + 1) * st;
            for (long j = 0; j < st; ++j) o[j] += w * hi[j];
          }
        }
      }
    }
  }

 private:
  int dim_;
  int side_;
  long stride_[kMaxDim] = {};
  long cells_ = 0;
};

// v <- exp(kappa dt (P - I)) v by uniformization.
void propagate(const BoxOperator& op, double kappa, double dt, std::vector<double>& v, std::vector<double>& w,
               std::vector<double>& tmp, std::vector<double>& acc) {
  if (!(dt > 0.0) || kappa == 0.0) return;
  constexpr double kChunk = 30.0;
  double remaining = kappa * dt;
  while (remaining > 0.0) {
    const double a = std::min(remaining, kChunk);
    remaining -= a;
    double weight = std::exp(-a);
    for (std::size_t i = 0; i < v.size(); ++i) acc[i] = weight * v[i];
    w = v;
    for (int k = 1;; ++k) {
      op.apply(w, tmp);
      std::swap(w, tmp);
      weight *= a / k;
      for (std::size_t i = 0; i < v.size(); ++i) acc[i] += weight * w[i];
      // Past the mode the Poisson terms shrink faster than geometrically.
      if (k > 2.0 * a && weight < 1e-17) break;
    }
    std::swap(v, acc);
  }
}

}  // namespace

QuenchedSurvival solve_quenched_survival(DisasterCache& cache, double kappa, std::span<const double> times,
                                         int radius) {
  check_rate(kappa);
  const int dim = cache.field().dimension();
  if (times.empty()) return {};
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] >= 0.0) || (i > 0 && times[i] < times[i - 1]))
      throw std::invalid_argument("solver times must be nonnegative and sorted");
  }
  const double t_max = times.back();
  if (radius <= 0) radius = default_solver_radius(kappa, t_max, dim);

  QuenchedSurvival out;
  out.radius = radius;
  const BoxOperator op(dim, radius);
  const std::size_t n = op.cells();

  // All disasters inside the box before t_max, ordered by time.
  std::vector<std::pair<double, std::size_t>> hits;
  const Region box = Region::cube(dim, radius);
  for (std::size_t idx = 0; idx < n; ++idx) {
    Site s = box.lo;
    std::size_t rest = idx;
    for (int i = 0; i < dim; ++i) {
      s[i] += static_cast<std::int32_t>(rest % static_cast<std::size_t>(2 * radius + 1));
      rest /= static_cast<std::size_t>(2 * radius + 1);
    }
    for (double d : cache.in_window(s, 0.0, t_max)) hits.emplace_back(d, idx);
  }
  std::sort(hits.begin(), hits.end());

  std::vector<double> v(n, 0.0), w(n), tmp(n), acc(n);
  const auto origin = static_cast<std::size_t>(op.index(Site{}, radius));
  v[origin] = 1.0;
  double log_scale = 0.0;
  double now = 0.0;
  std::size_t h = 0;

  auto renormalize = [&] {
    double sum = 0.0;
    for (double x : v) sum += x;
    if (sum > 0.0 && sum < 1e-100) {
      for (double& x : v) x /= sum;
      log_scale += std::log(sum);
    }
  };

  for (double t_out : times) {
    // Disasters strictly before t_out act; one at t_out still leaves tau >= t_out.
    while (h < hits.size() && hits[h].first < t_out) {
      propagate(op, kappa, hits[h].first - now, v, w, tmp, acc);
      now = hits[h].first;
      v[hits[h].second] = 0.0;
      ++h;
      renormalize();
    }
    propagate(op, kappa, t_out - now, v, w, tmp, acc);
    now = t_out;
    renormalize();
    double sum = 0.0;
    for (double x : v) sum += x;
    out.times.push_back(t_out);
    if (hits.empty()) {
      // Without disasters the walker survives surely; the only loss is the box edge.
      out.log_survival.push_back(0.0);
    } else {
      out.log_survival.push_back(sum > 0.0 ? std::log(sum) + log_scale : -kInf);
    }
    out.log_pinned.push_back(v[origin] > 0.0 ? std::log(v[origin]) + log_scale : -kInf);
  }
  return out;
}

namespace {

struct EnvLogs {
  std::vector<double> log_s;  // per requested time, after flooring
  std::vector<char> censored;
};

EnvLogs environment_logs(const LyapunovOptions& opt, std::span<const double> t_list, std::uint64_t seed,
                         std::size_t env) {
  DisasterCache cache(DisasterField(derive_seed(seed, "env", env), opt.alpha, opt.dim));
  const double floor_log = std::log(1.0 / (2.0 * static_cast<double>(opt.n_walkers)));
  EnvLogs r;
  if (opt.method == SurvivalMethod::forward_equation) {
    const auto q = solve_quenched_survival(cache, opt.kappa, t_list);
    for (std::size_t i = 0; i < t_list.size(); ++i) {
      const double l = opt.pinned ? q.log_pinned[i] : q.log_survival[i];
      const bool cens = !(l > -kInf);
      r.log_s.push_back(cens ? floor_log : std::min(l, 0.0));
      r.censored.push_back(cens);
    }
  } else {
    for (std::size_t i = 0; i < t_list.size(); ++i) {
      // One walker set per time keeps the per-time estimates independent of t_list.
      Rng rng(derive_seed(seed, "walkers", env * 1000003u + i));
      const auto e = estimate_survival(cache, opt.kappa, t_list[i], opt.n_walkers, opt.pinned, rng);
      const bool cens = e.value == 0.0;
      r.log_s.push_back(cens ? floor_log : std::log(e.value));
      r.censored.push_back(cens);
    }
  }
  return r;
}

void check_options(const LyapunovOptions& opt) {
  check_rate(opt.kappa);
  check_dimension(opt.dim);
  if (!(opt.alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
  if (opt.n_env < 1 || opt.n_walkers < 1) throw std::invalid_argument("n_env and n_walkers must be >= 1");
}

}  // namespace

LyapunovEstimate estimate_lyapunov(const LyapunovOptions& opt, std::uint64_t seed) {
  check_options(opt);
  if (!(opt.t > 0.0)) throw std::invalid_argument("t must be > 0");
  const double t_list[1] = {opt.t};
  const auto logs =
      parallel_map(opt.n_env, opt.threads, [&](std::size_t e) { return environment_logs(opt, t_list, seed, e); });
  RunningStats st;
  std::size_t cens = 0;
  for (const auto& l : logs) {
    st.add(l.log_s[0] / opt.t);
    cens += static_cast<std::size_t>(l.censored[0]);
  }
  LyapunovEstimate r;
  r.p_hat = st.mean();
  r.std_err = opt.n_env > 1 ? st.std_error() : std::numeric_limits<double>::quiet_NaN();
  r.censor_fraction = static_cast<double>(cens) / static_cast<double>(opt.n_env);
  r.dominated_by_censoring = r.censor_fraction > 0.5;
  return r;
}

std::vector<ProfileRow> concentration_profile(const LyapunovOptions& opt, std::span<const double> t_list,
                                              std::uint64_t seed) {
  check_options(opt);
  std::vector<double> ts(t_list.begin(), t_list.end());
  for (double t : ts) {
    if (!(t > 0.0)) throw std::invalid_argument("all profile times must be > 0");
  }
  std::vector<std::size_t> order(ts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ts[a] < ts[b]; });
  std::vector<double> sorted;
  for (auto i : order) sorted.push_back(ts[i]);

  const auto logs =
      parallel_map(opt.n_env, opt.threads, [&](std::size_t e) { return environment_logs(opt, sorted, seed, e); });

  std::vector<ProfileRow> rows(ts.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    RunningStats st;
    std::size_t cens = 0;
    for (const auto& l : logs) {
      st.add(l.log_s[k]);
      cens += static_cast<std::size_t>(l.censored[k]);
    }
    ProfileRow row;
    row.t = sorted[k];
    row.mean_log = st.mean();
    row.censor_fraction = static_cast<double>(cens) / static_cast<double>(opt.n_env);
    if (opt.n_env < 2) {
      row.std_valid = false;
      row.std_log = std::numeric_limits<double>::quiet_NaN();
      row.std_log_err = std::numeric_limits<double>::quiet_NaN();
    } else {
      row.std_log = st.stddev();
      double m4 = 0.0;
      for (const auto& l : logs) m4 += std::pow(l.log_s[k] - st.mean(), 4);
      m4 /= static_cast<double>(opt.n_env);
      const double var = st.variance();
      const double var_of_var = std::max(0.0, m4 - var * var) / static_cast<double>(opt.n_env);
      row.std_log_err = row.std_log > 0.0 ? std::sqrt(var_of_var) / (2.0 * row.std_log) : 0.0;
    }
    rows[order[k]] = row;
  }
  return rows;
}

}  // namespace brwd
