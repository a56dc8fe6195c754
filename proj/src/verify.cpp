#include "brwd/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <boost/multiprecision/cpp_int.hpp>

#include "brwd/boxes.hpp"
#include "brwd/orders.hpp"
#include "brwd/random.hpp"
#include "brwd/stats.hpp"

namespace brwd {

namespace {

using boost::multiprecision::cpp_rational;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

SuiteResult start(const char* group, const char* name) {
  SuiteResult r;
  r.group = group;
  r.name = name;
  return r;
}

void tally(SuiteResult& r, bool ok) {
  ++r.checks;
  if (!ok) ++r.failures;
}

SuiteResult finish(SuiteResult r) {
  r.passed = r.failures == 0 && r.checks > 0;
  return r;
}

std::vector<double> random_simplex(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  double s = 0.0;
  for (auto& x : v) s += x = exponential(rng, 1.0);
  for (auto& x : v) x /= s;
  const double residue = 1.0 - std::accumulate(v.begin(), v.end(), 0.0);
  *std::max_element(v.begin(), v.end()) += residue;
  return v;
}

// A random doubly stochastic image of d (mixture of three permutations), which
// is majorized by d.
DistOnSigma smear(const DistOnSigma& d, Rng& rng) {
  const std::size_t n = d.size();
  std::vector<double> out(n, 0.0);
  for (double c : random_simplex(rng, 3)) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, static_cast<std::uint32_t>(i))]);
    for (std::size_t i = 0; i < n; ++i) out[i] += c * d.masses()[perm[i]];
  }
  const double s = std::accumulate(out.begin(), out.end(), 0.0);
  for (auto& x : out) x /= s;
  return DistOnSigma(d.length(), out);
}

std::vector<cpp_rational> enumerate_parity(const std::vector<cpp_rational>& w, int k) {
  const std::size_t bins = w.size();
  std::vector<cpp_rational> law(std::size_t{1} << bins, cpp_rational(0));
  std::size_t total = 1;
  for (int i = 0; i < k; ++i) total *= bins;
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t c = code, mask = 0;
    cpp_rational p(1);
    for (int b = 0; b < k; ++b) {
      const std::size_t bin = c % bins;
      c /= bins;
      p *= w[bin];
      mask ^= std::size_t{1} << bin;
    }
    law[mask] += p;
  }
  return law;
}

}  // namespace

SuiteResult verify_parity_closed_form(int n_max) {
  SuiteResult r = start("parity", "binomial-parity-closed-form");
  double worst = 0.0;
  for (int n = 0; n <= n_max; ++n)
    for (int i = 0; i <= 20; ++i) {
      const cpp_rational p(i, 20), q = 1 - p;
      cpp_rational even(0), binom(1);
      for (int j = 0; j <= n; ++j) {
        if (j > 0) binom = binom * (n - j + 1) / j;
        if (j % 2) continue;
        cpp_rational term = binom;
        for (int a = 0; a < j; ++a) term *= p;
        for (int a = 0; a < n - j; ++a) term *= q;
        even += term;
      }
      const double err = std::abs(binom_parity_even(static_cast<std::uint64_t>(n), 0.05 * i) - even.convert_to<double>());
      worst = std::max(worst, err);
      tally(r, err <= 1e-12);
    }
  r.detail = "max abs error " + fmt("%.3g", worst);
  return finish(r);
}

SuiteResult verify_parity_dp(std::uint64_t seed) {
  SuiteResult r = start("parity", "parity-dp-vs-enumeration");
  Rng rng(derive_seed(seed, "verify-parity-dp"));
  for (int bins = 1; bins <= 5; ++bins)
    for (int trial = 0; trial < 3; ++trial) {
      std::vector<long long> num(static_cast<std::size_t>(bins));
      long long den = 0;
      for (auto& n : num) den += n = 1 + uniform_index(rng, 9);
      std::vector<cpp_rational> w(static_cast<std::size_t>(bins));
      for (int i = 0; i < bins; ++i) w[static_cast<std::size_t>(i)] = cpp_rational(num[static_cast<std::size_t>(i)], den);
      for (int k = 0; k <= 6; ++k) tally(r, parity_state_law<cpp_rational>(w, k) == enumerate_parity(w, k));
    }
  r.detail = "exact equality, up to 5 bins and 6 balls";
  return finish(r);
}

SuiteResult verify_majorization(std::uint64_t seed, std::size_t n_pairs) {
  SuiteResult r = start("orders", "majorization-oracles");
  Rng rng(derive_seed(seed, "verify-majorization"));
  std::size_t comparable = 0;
  for (int len : {3, 4})
    for (std::size_t i = 0; i < n_pairs; ++i) {
      const DistOnSigma nu(len, random_simplex(rng, std::size_t{1} << (len - 1)));
      const bool built = i % 2 == 1;
      const DistOnSigma mu = built ? smear(nu, rng) : DistOnSigma(len, random_simplex(rng, nu.size()));
      const bool m = majorization_leq(mu, nu, 1e-12);
      comparable += m;
      tally(r, m == hockey_stick_leq(mu, nu, 1e-12));
      tally(r, m == t_transform_reachable(mu, nu, 1e-10));
      if (m) tally(r, power_family_leq(mu, nu));
      if (built) tally(r, m);
    }
  r.detail = std::to_string(comparable) + " comparable pairs of " + std::to_string(2 * n_pairs);
  return finish(r);
}

SuiteResult verify_parity_monotone(std::uint64_t seed, int n_max, int k_max, std::size_t n_vectors) {
  SuiteResult r = start("orders", "parity-law-monotone");
  Rng rng(derive_seed(seed, "verify-parity-monotone"));
  std::size_t violations = 0;
  for (int N = 1; N <= n_max; ++N)
    for (std::size_t v = 0; v < n_vectors; ++v) {
      const WeightVector w(random_simplex(rng, static_cast<std::size_t>(N + 1)));
      for (int k = 0; k <= k_max; ++k) {
        const auto bad = lemma38i_check(w, k);
        violations += bad.size();
        tally(r, bad.empty());
      }
    }
  r.detail = std::to_string(violations) + " violating pairs";
  return finish(r);
}

SuiteResult verify_parity_coupling(std::uint64_t seed, std::size_t n_samples) {
  SuiteResult r = start("orders", "parity-coupling");
  Rng rng(derive_seed(seed, "verify-parity-coupling"));
  std::size_t violations = 0;
  double min_p = 1.0;
  for (int N = 1; N <= 4; ++N) {
    const WeightVector w(random_simplex(rng, static_cast<std::size_t>(N + 1)));
    const std::size_t cells = sigma_elements(N + 1).size();
    for (int k = 0; k <= 3; ++k) {
      std::vector<double> lo_counts(cells, 0.0), hi_counts(cells, 0.0);
      std::size_t bad = 0;
      for (std::size_t i = 0; i < n_samples; ++i) {
        const auto [lo, hi] = couple_parity(w, k, rng);
        if (!prefix_leq(lo, hi) || !lo.in_sigma() || !hi.in_sigma()) ++bad;
        lo_counts[lo.bits >> 1] += 1.0;
        hi_counts[hi.bits >> 1] += 1.0;
      }
      violations += bad;
      tally(r, bad == 0);
      const auto law_lo = parity_dist(w, 2 * k), law_hi = parity_dist(w, 2 * k + 2);
      std::vector<double> e_lo(cells), e_hi(cells);
      for (std::size_t j = 0; j < cells; ++j) {
        e_lo[j] = static_cast<double>(n_samples) * law_lo.masses()[j];
        e_hi[j] = static_cast<double>(n_samples) * law_hi.masses()[j];
      }
      // With no balls the low marginal is a point mass; compare it directly.
      if (k == 0) {
        tally(r, lo_counts[0] == static_cast<double>(n_samples));
      } else {
        const double p = chi_square_gof(lo_counts, e_lo).p_value;
        min_p = std::min(min_p, p);
        tally(r, p > 0.01);
      }
      if (cells > 1) {
        const double p = chi_square_gof(hi_counts, e_hi).p_value;
        min_p = std::min(min_p, p);
        tally(r, p > 0.01);
      }
    }
  }
  r.detail = std::to_string(violations) + " order violations, min chi-squared p " + fmt("%.4g", min_p);
  return finish(r);
}

SuiteResult verify_walk_ratio(int l_max) {
  SuiteResult r = start("orders", "walk-ratio-bound");
  for (int l = 0; l <= l_max; ++l)
    for (int k = 0; k <= l; ++k)
      for (int x = -k; x <= k; ++x)
        if ((k - x) % 2 == 0 && (l - x) % 2 == 0) tally(r, lemma37_inequality(k, l, x));
  r.detail = "k <= l <= " + std::to_string(l_max);
  return finish(r);
}

SuiteResult verify_lr_order() {
  SuiteResult r = start("orders", "jump-count-lr-order");
  for (double rate : {0.5, 1.0, 4.0})
    for (int x1 : {0, 2}) tally(r, lr_order_check(rate, x1, 60));
  r.detail = "rates 0.5 1 4, x1 0 2, n_max 60";
  return finish(r);
}

SuiteResult verify_lemma47(std::uint64_t seed, std::size_t n_laws) {
  SuiteResult r = start("lemma47", "product-inequality");
  // The uniform law on the unit vectors attains equality.
  for (int m = 1; m <= 5; ++m)
    for (int S = 1; S <= 4; ++S) {
      std::vector<cpp_rational> joint(std::size_t{1} << (m + 1), cpp_rational(0));
      for (int i = 0; i <= m; ++i) joint[std::size_t{1} << i] = cpp_rational(1, m + 1);
      const auto s = lemma47_sides<cpp_rational>(joint, S);
      tally(r, s.lhs == s.rhs);
    }
  Rng rng(derive_seed(seed, "verify-lemma47"));
  std::size_t violations = 0;
  cpp_rational min_slack(1);
  for (std::size_t trial = 0; trial < n_laws; ++trial) {
    const int m = 1 + static_cast<int>(uniform_index(rng, 5));
    const int S = 1 + static_cast<int>(uniform_index(rng, 4));
    const std::size_t size = std::size_t{1} << (m + 1);
    std::vector<long> w(size);
    long total = 0;
    // Sparse laws get closer to the extremal corner.
    const bool sparse = trial % 2 == 1;
    for (auto& x : w) total += x = (sparse && uniform_index(rng, 4) != 0) ? 0 : uniform_index(rng, 10);
    if (total == 0) {
      w[0] = 1;
      total = 1;
    }
    std::vector<cpp_rational> joint(size);
    for (std::size_t i = 0; i < size; ++i) joint[i] = cpp_rational(w[i], total);
    const auto s = lemma47_sides<cpp_rational>(joint, S);
    const bool ok = s.lhs <= s.rhs;
    violations += !ok;
    min_slack = std::min(min_slack, cpp_rational(s.rhs - s.lhs));
    tally(r, ok);
  }
  r.detail = std::to_string(violations) + " violations, min slack " + fmt("%.4g", min_slack.convert_to<double>());
  return finish(r);
}

std::vector<SuiteResult> run_oracle_suites(std::uint64_t seed) {
  return {verify_parity_closed_form(),  verify_parity_dp(seed),      verify_majorization(seed),
          verify_parity_monotone(seed), verify_parity_coupling(seed), verify_walk_ratio(),
          verify_lr_order(),            verify_lemma47(seed)};
}

}  // namespace brwd
