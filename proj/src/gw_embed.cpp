#include "brwd/gw_embed.hpp"

#include <boost/math/special_functions/bessel.hpp>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "brwd/parallel.hpp"
#include "brwd/walk.hpp"

namespace brwd {

namespace {

struct PeriodCounts {
  std::vector<std::int64_t> counts;
  std::size_t capped = 0;
};

PeriodCounts period_counts(const DisasterField& field, const BrwParams& params, double T, int k,
                           std::size_t n_reps, std::uint64_t seed, const ReplicaOptions& ro) {
  params.validate();
  if (field.dimension() != params.dim) throw std::invalid_argument("offspring sampling: dimension mismatch");
  if (!(T >= 0.0)) throw std::invalid_argument("period T must be >= 0");
  if (k < 1) throw std::invalid_argument("period index k must be >= 1");
  if (n_reps < 1) throw std::invalid_argument("n_reps must be >= 1");
  const std::uint64_t base = derive_seed(seed, "offspring", static_cast<std::uint64_t>(k));
  const std::size_t block = 256;
  const std::size_t n_blocks = (n_reps + block - 1) / block;
  const auto parts = parallel_map(n_blocks, ro.threads, [&](std::size_t b) {
    DisasterCache cache(field);
    PeriodCounts pc;
    for (std::size_t r = b * block; r < std::min(n_reps, (b + 1) * block); ++r) {
      SimOptions opt;
      opt.start_time = (k - 1) * T;
      opt.horizon = k * T;
      opt.caps = ro.caps;
      opt.keep_final = true;
      const auto res = simulate(params, point_configuration(Site{}), cache, opt, derive_seed(base, r));
      const auto it = res.final_counts.find(Site{});
      pc.counts.push_back(it == res.final_counts.end() ? 0 : it->second);
      pc.capped += res.capped;
    }
    return pc;
  });
  PeriodCounts all;
  for (const auto& p : parts) {
    all.counts.insert(all.counts.end(), p.counts.begin(), p.counts.end());
    all.capped += p.capped;
  }
  return all;
}

double pinned_walker_estimate(const DisasterField& field, double kappa, double T, std::size_t n_walkers,
                              std::uint64_t seed, double* se) {
  Rng rng(derive_seed(seed, "pinned-walkers"));
  const auto s = estimate_survival(field, kappa, T, n_walkers, true, rng);
  *se = s.std_err;
  return s.value;
}

}  // namespace

OffspringSample sample_offspring(const DisasterField& field, const BrwParams& params, double T, int k,
                                 std::size_t n_reps, std::uint64_t seed, const ReplicaOptions& ro) {
  const auto pc = period_counts(field, params, T, k, n_reps, seed, ro);
  OffspringSample s;
  s.k = k;
  s.n_reps = n_reps;
  s.capped = pc.capped;
  RunningStats st;
  for (auto c : pc.counts) {
    if (static_cast<std::size_t>(c) >= s.pmf.size()) s.pmf.resize(static_cast<std::size_t>(c) + 1, 0.0);
    s.pmf[static_cast<std::size_t>(c)] += 1.0;
    st.add(static_cast<double>(c));
  }
  double mean = 0.0;
  for (std::size_t j = 0; j < s.pmf.size(); ++j) {
    s.pmf[j] /= static_cast<double>(n_reps);
    mean += static_cast<double>(j) * s.pmf[j];
  }
  s.mean = mean;
  s.std_err = n_reps > 1 ? st.std_error() : 0.0;
  return s;
}

IdentityCheck identity_3_8_check(const DisasterField& field, const BrwParams& params, double T, std::size_t n_reps,
                                 std::size_t n_walkers, std::uint64_t seed, const ReplicaOptions& ro) {
  IdentityCheck c;
  if (T == 0.0) {
    c.lhs = c.rhs = 1.0;
    return c;
  }
  const auto s = sample_offspring(field, params, T, 1, n_reps, seed, ro);
  c.lhs = s.mean;
  c.lhs_se = s.std_err;
  double se = 0.0;
  const double pinned = pinned_walker_estimate(field, params.kappa, T, n_walkers, seed, &se);
  const double g = std::exp(params.growth_exponent() * T);
  c.rhs = g * pinned;
  c.rhs_se = g * se;
  const double sigma = std::hypot(c.lhs_se, c.rhs_se);
  c.z = sigma > 0.0 ? (c.lhs - c.rhs) / sigma : 0.0;
  return c;
}

BoundCheck nonextinction_bound_check(const DisasterField& field, const BrwParams& params, double T,
                                     std::size_t n_reps, std::size_t n_walkers, std::uint64_t seed,
                                     const ReplicaOptions& ro) {
  const auto s = sample_offspring(field, params, T, 1, n_reps, seed, ro);
  BoundCheck b;
  b.lhs = 1.0 - s.pmf[0];
  b.lhs_se = binomial_std_error(b.lhs, n_reps);
  double se = 0.0;
  const double pinned = T == 0.0 ? 1.0 : pinned_walker_estimate(field, params.kappa, T, n_walkers, seed, &se);
  const double f = std::exp(-params.lambda * T * params.offspring[0]);
  b.rhs = f * pinned;
  b.rhs_se = f * se;
  b.violated = b.lhs + 3.0 * std::hypot(b.lhs_se, b.rhs_se) < b.rhs;
  return b;
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::subcritical: return "subcritical";
    case Phase::critical_band: return "critical-band";
    case Phase::supercritical: return "supercritical";
  }
  return "?";
}

PhaseVerdict phase_classify(const BrwParams& params, double t_lyap, std::size_t n_env, std::size_t n_walkers,
                            std::uint64_t seed, int threads) {
  params.validate();
  LyapunovOptions opt;
  opt.kappa = params.kappa;
  opt.alpha = params.alpha;
  opt.dim = params.dim;
  opt.t = t_lyap;
  opt.n_env = n_env;
  opt.n_walkers = n_walkers;
  opt.threads = threads;
  const auto ly = estimate_lyapunov(opt, seed);
  PhaseVerdict v;
  v.p_hat = ly.p_hat;
  v.std_err = std::isnan(ly.std_err) ? 0.0 : ly.std_err;
  v.criterion = params.growth_exponent() + ly.p_hat;
  v.censor_fraction = ly.censor_fraction;
  v.unreliable = ly.censor_fraction > 0.5;
  if (std::abs(v.criterion) <= 3.0 * v.std_err) v.verdict = Phase::critical_band;
  else v.verdict = v.criterion > 0.0 ? Phase::supercritical : Phase::subcritical;
  return v;
}

IndependenceReport offspring_independence(const BrwParams& params, double T, std::size_t n_fields,
                                          std::size_t n_reps, std::uint64_t seed, int threads) {
  if (n_fields < 4) throw std::invalid_argument("offspring_independence: need at least 4 fields");
  struct PerField {
    std::vector<std::int64_t> c1, c2;
  };
  const auto per = parallel_map(n_fields, threads, [&](std::size_t i) {
    const DisasterField field(derive_seed(seed, "embed-field", i), params.alpha, params.dim);
    const std::uint64_t s = derive_seed(seed, "embed-trees", i);
    PerField pf;
    pf.c1 = period_counts(field, params, T, 1, n_reps, s, {}).counts;
    pf.c2 = period_counts(field, params, T, 2, n_reps, s, {}).counts;
    return pf;
  });
  IndependenceReport rep;
  std::vector<double> m1, m2, h1, h2;
  std::size_t degenerate = 0, finite = 0;
  double log_sum = 0.0;
  for (const auto& pf : per) {
    double a = 0, b = 0, zeros = 0;
    for (auto c : pf.c1) {
      a += static_cast<double>(c);
      zeros += c == 0;
    }
    for (auto c : pf.c2) b += static_cast<double>(c);
    // Counts within one field are dependent, so the homogeneity table takes
    // a single tree per field and period.
    for (auto [h, c] : {std::pair{&h1, pf.c1.front()}, std::pair{&h2, pf.c2.front()}}) {
      if (static_cast<std::size_t>(c) >= h->size()) h->resize(static_cast<std::size_t>(c) + 1, 0.0);
      (*h)[static_cast<std::size_t>(c)] += 1;
    }
    m1.push_back(a / static_cast<double>(n_reps));
    m2.push_back(b / static_cast<double>(n_reps));
    const double q0 = zeros / static_cast<double>(n_reps);
    if (q0 >= 1.0) {
      ++degenerate;
    } else {
      ++finite;
      log_sum += std::log(1.0 - q0);
    }
  }
  const std::size_t width = std::max(h1.size(), h2.size());
  h1.resize(width, 0.0);
  h2.resize(width, 0.0);
  rep.homogeneity = chi_square_homogeneity(h1, h2);
  rep.correlation = pearson_correlation(m1, m2);
  if (std::isnan(rep.correlation)) {
    rep.correlation_p = 1.0;
  } else {
    const double r = std::clamp(rep.correlation, -0.999999, 0.999999);
    const double z = std::atanh(r) * std::sqrt(static_cast<double>(n_fields) - 3.0);
    rep.correlation_p = 2.0 * (1.0 - normal_cdf(std::abs(z)));
  }
  rep.ks_p = ks_two_sample_pvalue(ks_two_sample_statistic(m1, m2), m1.size(), m2.size());
  rep.degenerate_fraction = static_cast<double>(degenerate) / static_cast<double>(n_fields);
  rep.mean_log_nonextinction =
      finite > 0 ? log_sum / static_cast<double>(finite) : -std::numeric_limits<double>::infinity();
  return rep;
}

double annealed_pinned_survival(double kappa, double alpha, int dim, double T) {
  check_dimension(dim);
  const double x = kappa * T / dim;
  // exp(-x) I_0(x) is the return probability of one coordinate.
  const double one = std::exp(-x) * boost::math::cyl_bessel_i(0, x);
  return std::exp(-alpha * T) * std::pow(one, dim);
}

PeriodChoice choose_period(const BrwParams& params, double t_max, double lo, double hi) {
  params.validate();
  if (!(t_max >= 0.25)) throw std::invalid_argument("choose_period: t_max must be >= 0.25");
  PeriodChoice best;
  double best_gap = std::numeric_limits<double>::infinity();
  bool found = false;
  for (double T = 0.25; T <= t_max + 1e-12; T += 0.25) {
    const double m = std::exp(params.growth_exponent() * T) *
                     annealed_pinned_survival(params.kappa, params.alpha, params.dim, T);
    if (m >= lo && m <= hi) {
      best = {T, m, true};
      found = true;
    } else if (!found) {
      const double gap = m < lo ? std::log(lo / m) : std::log(m / hi);
      if (gap < best_gap) {
        best_gap = gap;
        best = {T, m, false};
      }
    }
  }
  return best;
}

}  // namespace brwd
