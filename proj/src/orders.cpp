#include "brwd/orders.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>

namespace brwd {

WeightVector::WeightVector(std::vector<double> w) : w_(std::move(w)) {
  if (w_.empty() || w_.size() > static_cast<std::size_t>(kMaxBins))
    throw std::invalid_argument("WeightVector: need between 1 and 13 bins");
  double sum = 0.0;
  for (double p : w_) {
    if (!(p >= 0.0)) throw std::invalid_argument("WeightVector: negative or NaN weight");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("WeightVector: weights must sum to 1");
  std::sort(w_.begin(), w_.end());
}

int ParityConfig::ones() const { return std::popcount(bits); }

std::string ParityConfig::to_string() const {
  std::string s;
  for (int i = 0; i < length; ++i) s.push_back(bit(i) ? '1' : '0');
  return s;
}

ParityConfig make_config(std::initializer_list<int> bits) {
  ParityConfig c;
  for (int b : bits) {
    if (b) c.bits |= 1u << c.length;
    ++c.length;
  }
  return c;
}

std::vector<std::uint32_t> sigma_elements(int length) {
  if (length < 1 || length > kMaxBins) throw std::invalid_argument("sigma_elements: bad length");
  std::vector<std::uint32_t> out;
  for (std::uint32_t m = 0; m < (1u << length); ++m)
    if (std::popcount(m) % 2 == 0) out.push_back(m);
  return out;
}

namespace {

std::size_t sigma_index(std::uint32_t mask) {
  // Even masks in ascending order: dropping bit 0 gives a bijection with
  // all masks of one fewer bit, and the order is preserved.
  return mask >> 1;
}

}  // namespace

DistOnSigma::DistOnSigma(int length, std::vector<double> mass) : length_(length), mass_(std::move(mass)) {
  if (length < 1 || length > kMaxBins) throw std::invalid_argument("DistOnSigma: bad length");
  if (mass_.size() != (std::size_t{1} << (length - 1))) throw std::invalid_argument("DistOnSigma: wrong size");
  double sum = 0.0;
  for (double m : mass_) {
    if (!(m >= 0.0)) throw std::invalid_argument("DistOnSigma: negative or NaN mass");
    sum += m;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("DistOnSigma: masses must sum to 1");
}

DistOnSigma DistOnSigma::uniform(int length) {
  const std::size_t n = std::size_t{1} << (length - 1);
  return DistOnSigma(length, std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

double DistOnSigma::operator()(const ParityConfig& c) const {
  if (c.length != length_) throw std::invalid_argument("DistOnSigma: length mismatch");
  if (!c.in_sigma()) return 0.0;
  return mass_[sigma_index(c.bits)];
}

double binom_parity_even(std::uint64_t n, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("binom_parity_even: p outside [0,1]");
  return 0.5 * (1.0 + std::pow(1.0 - 2.0 * p, static_cast<double>(n)));
}

namespace {

DistOnSigma restrict_to_sigma(int length, const std::vector<double>& law) {
  std::vector<double> mass(std::size_t{1} << (length - 1));
  double sum = 0.0;
  for (std::uint32_t m = 0; m < law.size(); ++m) {
    if (std::popcount(m) % 2 != 0) continue;
    mass[sigma_index(m)] = law[m];
    sum += law[m];
  }
  // DP rounding drifts by a few ulps per ball.
  for (double& v : mass) v /= sum;
  return DistOnSigma(length, std::move(mass));
}

}  // namespace

DistOnSigma parity_dist(const WeightVector& w, int k) {
  if (k % 2 != 0) throw std::invalid_argument("parity_dist: odd ball count puts mass outside the even configurations");
  return restrict_to_sigma(static_cast<int>(w.size()), parity_state_law<double>(w.values(), k));
}

bool prefix_leq(const ParityConfig& I, const ParityConfig& J) {
  if (I.length != J.length) throw std::invalid_argument("prefix_leq: length mismatch");
  int si = 0, sj = 0;
  for (int l = 0; l < I.length; ++l) {
    si += I.bit(l);
    sj += J.bit(l);
    if (si > sj) return false;
  }
  return true;
}

namespace {

std::vector<double> sorted_desc(const DistOnSigma& d) {
  std::vector<double> v(d.masses().begin(), d.masses().end());
  std::sort(v.begin(), v.end(), std::greater<>());
  return v;
}

void require_same(const DistOnSigma& a, const DistOnSigma& b) {
  if (a.length() != b.length()) throw std::invalid_argument("majorization: different configuration spaces");
}

}  // namespace

bool majorization_leq(const DistOnSigma& mu, const DistOnSigma& nu, double tol) {
  require_same(mu, nu);
  const auto a = sorted_desc(mu), b = sorted_desc(nu);
  double sa = 0.0, sb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
    if (sa > sb + tol) return false;
  }
  return true;
}

bool hockey_stick_leq(const DistOnSigma& mu, const DistOnSigma& nu, double tol) {
  require_same(mu, nu);
  // Both sides are piecewise linear in c with kinks at the mass values, so
  // checking at the kinks covers every c.
  std::vector<double> knots(mu.masses().begin(), mu.masses().end());
  knots.insert(knots.end(), nu.masses().begin(), nu.masses().end());
  auto excess = [](std::span<const double> m, double c) {
    double s = 0.0;
    for (double x : m) s += std::max(x - c, 0.0);
    return s;
  };
  for (double c : knots)
    if (excess(mu.masses(), c) > excess(nu.masses(), c) + tol) return false;
  return true;
}

bool power_family_leq(const DistOnSigma& mu, const DistOnSigma& nu, double tol) {
  require_same(mu, nu);
  auto total = [](std::span<const double> m, double delta) {
    double s = 0.0;
    for (double x : m) s += x > 0.0 ? std::pow(x, -delta) : std::numeric_limits<double>::infinity();
    return s;
  };
  for (int i = 1; i <= 9; ++i) {
    const double delta = 0.1 * i;
    const double a = total(mu.masses(), delta), b = total(nu.masses(), delta);
    if (std::isinf(b)) continue;
    if (a > b * (1.0 + tol)) return false;
  }
  return true;
}

bool t_transform_reachable(const DistOnSigma& mu, const DistOnSigma& nu, double tol) {
  require_same(mu, nu);
  const auto x = sorted_desc(mu);
  auto y = sorted_desc(nu);
  const std::size_t n = x.size();
  for (std::size_t step = 0; step <= 2 * n; ++step) {
    bool equal = true;
    for (std::size_t i = 0; i < n; ++i) equal = equal && std::abs(x[i] - y[i]) <= tol;
    if (equal) return true;
    std::size_t j = n;
    for (std::size_t i = n; i-- > 0;)
      if (x[i] < y[i] - tol) {
        j = i;
        break;
      }
    if (j == n) return false;
    std::size_t k = n;
    for (std::size_t i = j + 1; i < n; ++i)
      if (x[i] > y[i] + tol) {
        k = i;
        break;
      }
    if (k == n) return false;
    const double delta = std::min(y[j] - x[j], x[k] - y[k]);
    // A transfer from a richer to a poorer coordinate that does not overshoot
    // their midpoint is a T-transform.
    if (delta > 0.5 * (y[j] - y[k]) + tol) return false;
    y[j] -= delta;
    y[k] += delta;
    std::sort(y.begin(), y.end(), std::greater<>());
  }
  return false;
}

std::vector<std::pair<ParityConfig, ParityConfig>> lemma38i_check_unsorted(std::span<const double> w, int k,
                                                                            double tol) {
  const int len = static_cast<int>(w.size());
  const auto law = parity_state_law<double>(w, 2 * k);
  const auto sigma = sigma_elements(len);
  std::vector<std::pair<ParityConfig, ParityConfig>> bad;
  for (auto a : sigma)
    for (auto b : sigma) {
      const ParityConfig I{a, len}, J{b, len};
      if (a != b && prefix_leq(I, J) && law[a] < law[b] - tol) bad.emplace_back(I, J);
    }
  return bad;
}

std::vector<std::pair<ParityConfig, ParityConfig>> lemma38i_check(const WeightVector& w, int k, double tol) {
  return lemma38i_check_unsorted(w.values(), k, tol);
}

std::pair<ParityConfig, ParityConfig> couple_parity(const WeightVector& w, int k, Rng& rng) {
  if (k < 0) throw std::invalid_argument("couple_parity: negative k");
  const int len = static_cast<int>(w.size());
  std::vector<double> cdf(w.size());
  std::partial_sum(w.values().begin(), w.values().end(), cdf.begin());

  std::vector<std::uint64_t> m(w.size(), 0);
  for (int b = 0; b < 2 * k; ++b) ++m[sample_cdf(rng, cdf)];
  std::uint32_t base = 0;
  for (int i = 0; i < len; ++i)
    if (m[i] % 2) base |= 1u << i;

  // Two extra balls; B is the lower bin, A the higher.
  const std::size_t x = sample_cdf(rng, cdf), y = sample_cdf(rng, cdf);
  const int B = static_cast<int>(std::min(x, y)), A = static_cast<int>(std::max(x, y));
  const double u = uniform_pos(rng);
  if (A == B) return {ParityConfig{base, len}, ParityConfig{base, len}};

  const std::uint64_t r = m[A] + m[B];
  const double p = w[B] / (w[A] + w[B]);
  const double even = binom_parity_even(r, p);
  const std::uint32_t ib_lo = u <= 1.0 - even ? 1u : 0u;
  const std::uint32_t ib_hi = u <= even ? 1u : 0u;
  auto build = [&](std::uint32_t ib) {
    std::uint32_t bits = base & ~((1u << A) | (1u << B));
    const std::uint32_t ia = static_cast<std::uint32_t>((r + 2 - ib) % 2);
    bits |= ib << B;
    bits |= ia << A;
    return ParityConfig{bits, len};
  };
  return {build(ib_lo), build(ib_hi)};
}

namespace {

// log P(Z_n = x) for the discrete simple walk; -inf off the support.
double log_walk_prob(int n, int x) {
  if (std::abs(x) > n || (n - x) % 2 != 0) return -std::numeric_limits<double>::infinity();
  const int up = (n + x) / 2;
  return std::lgamma(n + 1.0) - std::lgamma(up + 1.0) - std::lgamma(n - up + 1.0) - n * std::log(2.0);
}

double log_poisson(double rate, int n) { return n * std::log(rate) - rate - std::lgamma(n + 1.0); }

void check_walk_args(int k, int l, int x1) {
  if (k < 0 || k > l) throw std::invalid_argument("lemma37: need 0 <= k <= l");
  if ((k - x1) % 2 != 0 || (l - x1) % 2 != 0) throw std::invalid_argument("lemma37: parity mismatch");
  if (std::abs(x1) > k) throw std::invalid_argument("lemma37: |x1| exceeds k");
}

struct LogLaws {
  std::vector<double> fast, slow;
};

LogLaws log_jump_laws(double rate, int x1, int n_max) {
  if (!(rate > 0.0)) throw std::invalid_argument("jump laws: rate must be positive");
  if (n_max < std::abs(x1)) throw std::invalid_argument("jump laws: n_max below |x1|");
  const double ninf = -std::numeric_limits<double>::infinity();
  LogLaws out{std::vector<double>(n_max + 1, ninf), std::vector<double>(n_max + 1, ninf)};
  for (int n = 0; n <= n_max; ++n) {
    if ((n - x1) % 2 != 0) continue;
    out.slow[n] = log_poisson(0.5 * rate, n);
    if (n >= std::abs(x1)) out.fast[n] = log_poisson(rate, n) + log_walk_prob(n, x1);
  }
  auto normalize = [](std::vector<double>& v) {
    const double mx = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double a : v) s += std::exp(a - mx);
    const double lz = mx + std::log(s);
    for (double& a : v) a -= lz;
    return lz;
  };
  const double lz_fast = normalize(out.fast);
  const double lz_slow = normalize(out.slow);
  // Unconditional Poisson tails bound the conditional ones after dividing by
  // the conditioning probability.
  const double tail_fast = boost::math::gamma_p(n_max + 1.0, rate);
  const double tail_slow = boost::math::gamma_p(n_max + 1.0, 0.5 * rate);
  if (tail_fast > 1e-12 * std::exp(lz_fast) || tail_slow > 1e-12 * std::exp(lz_slow))
    throw std::domain_error("jump laws: truncation tail above 1e-12, raise n_max");
  return out;
}

}  // namespace

bool lemma37_inequality(int k, int l, int x1) {
  check_walk_args(k, l, x1);
  const double log_ratio = log_walk_prob(k, x1) - log_walk_prob(l, x1);
  return log_ratio <= (l - k) * std::log(2.0) + 1e-12;
}

JumpCountLaws conditional_jump_laws(double rate, int x1, int n_max) {
  if (n_max < std::abs(x1)) throw std::invalid_argument("jump laws: n_max below |x1|");
  JumpCountLaws out{std::vector<double>(n_max + 1, 0.0), std::vector<double>(n_max + 1, 0.0)};
  if (rate == 0.0) {
    out.fast[std::abs(x1)] = 1.0;
    out.slow[std::abs(x1) % 2] = 1.0;
    return out;
  }
  const auto lg = log_jump_laws(rate, x1, n_max);
  for (int n = 0; n <= n_max; ++n) {
    out.fast[n] = std::exp(lg.fast[n]);
    out.slow[n] = std::exp(lg.slow[n]);
  }
  return out;
}

bool lr_order_check(double rate, int x1, int n_max) {
  if (rate == 0.0) return true;
  const auto lg = log_jump_laws(rate, x1, n_max);
  for (int k = 0; k <= n_max; ++k)
    for (int l = k; l <= n_max; ++l) {
      const double lhs = lg.fast[k] + lg.slow[l], rhs = lg.fast[l] + lg.slow[k];
      if (std::isinf(lhs) && lhs < 0) continue;
      if (lhs > rhs + 1e-9) return false;
    }
  return true;
}

bool cdf_dominance_check(double rate, int x1, int n_max) {
  const auto laws = conditional_jump_laws(rate, x1, n_max);
  double fast = 0.0, slow = 0.0;
  for (int n = 0; n <= n_max; ++n) {
    fast += laws.fast[n];
    slow += laws.slow[n];
    if (slow < fast - 1e-12) return false;
  }
  return true;
}

std::pair<DistOnSigma, DistOnSigma> jump_mixture_measures(const WeightVector& w, double rate, int x1, int n_max) {
  if (x1 % 2 != 0) throw std::invalid_argument("jump mixtures: odd x1 leaves the even configurations");
  const auto laws = conditional_jump_laws(rate, x1, n_max);
  const int len = static_cast<int>(w.size());
  const std::size_t states = std::size_t{1} << len;
  std::vector<double> cur(states, 0.0), next(states), mu(states, 0.0), nu(states, 0.0);
  cur[0] = 1.0;
  for (int n = 0; n <= n_max; ++n) {
    for (std::size_t s = 0; s < states; ++s) {
      mu[s] += laws.fast[n] * cur[s];
      nu[s] += laws.slow[n] * cur[s];
    }
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t s = 0; s < states; ++s)
      for (int i = 0; i < len; ++i) next[s ^ (std::size_t{1} << i)] += cur[s] * w[i];
    std::swap(cur, next);
  }
  return {restrict_to_sigma(len, mu), restrict_to_sigma(len, nu)};
}

}  // namespace brwd
