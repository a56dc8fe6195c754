#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <boost/multiprecision/cpp_int.hpp>

#include "brwd/orders.hpp"
#include "brwd/stats.hpp"
#include "doctest.h"

using namespace brwd;
using boost::multiprecision::cpp_rational;

namespace {

std::vector<double> random_simplex(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  double s = 0.0;
  for (auto& x : v) s += x = exponential(rng, 1.0);
  for (auto& x : v) x /= s;
  // Push the rounding residue into the largest entry so the sum is 1 to an ulp.
  const double r = 1.0 - std::accumulate(v.begin(), v.end(), 0.0);
  *std::max_element(v.begin(), v.end()) += r;
  return v;
}

DistOnSigma random_dist(Rng& rng, int length) {
  return DistOnSigma(length, random_simplex(rng, std::size_t{1} << (length - 1)));
}

// Applies a random doubly stochastic matrix (a mixture of permutations).
DistOnSigma smear(const DistOnSigma& d, Rng& rng) {
  const std::size_t n = d.size();
  std::vector<double> out(n, 0.0);
  const auto mix = random_simplex(rng, 3);
  for (double c : mix) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, static_cast<std::uint32_t>(i))]);
    for (std::size_t i = 0; i < n; ++i) out[i] += c * d.masses()[perm[i]];
  }
  const double s = std::accumulate(out.begin(), out.end(), 0.0);
  for (auto& x : out) x /= s;
  return DistOnSigma(d.length(), out);
}

// Exhaustive enumeration over the (N+1)^k ordered ball placements.
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

TEST_CASE("weight vector") {
  const WeightVector w({0.5, 0.2, 0.3});
  CHECK(w[0] == 0.2);
  CHECK(w[2] == 0.5);
  CHECK_THROWS_AS(WeightVector({0.5, 0.4}), std::invalid_argument);
  CHECK_THROWS_AS(WeightVector({1.2, -0.2}), std::invalid_argument);
  CHECK_THROWS_AS(WeightVector({}), std::invalid_argument);
}

TEST_CASE("sigma indexing") {
  for (int len = 1; len <= 6; ++len) {
    const auto s = sigma_elements(len);
    CHECK(s.size() == (std::size_t{1} << (len - 1)));
    const auto u = DistOnSigma::uniform(len);
    for (auto m : s) CHECK(u(ParityConfig{m, len}) == doctest::Approx(1.0 / static_cast<double>(s.size())));
  }
  // Odd configurations carry no mass.
  CHECK(DistOnSigma::uniform(3)(make_config({1, 0, 0})) == 0.0);
}

TEST_CASE("binomial parity closed form") {
  CHECK(binom_parity_even(0, 0.7) == 1.0);
  CHECK(binom_parity_even(1, 0.25) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(binom_parity_even(2, 0.3) == doctest::Approx(0.58).epsilon(1e-14));
  for (int n = 0; n <= 30; ++n)
    for (int i = 0; i <= 10; ++i) {
      const double p = 0.1 * i;
      double even = 0.0;
      for (int j = 0; j <= n; j += 2)
        even += std::exp(std::lgamma(n + 1.0) - std::lgamma(j + 1.0) - std::lgamma(n - j + 1.0)) *
                std::pow(p, j) * std::pow(1.0 - p, n - j);
      CHECK(std::abs(binom_parity_even(n, p) - even) <= 1e-12);
    }
  CHECK_THROWS_AS(binom_parity_even(3, 1.5), std::invalid_argument);
}

TEST_CASE("parity distribution small cases") {
  const auto d0 = parity_dist(WeightVector({0.3, 0.3, 0.4}), 0);
  CHECK(d0(make_config({0, 0, 0})) == 1.0);

  const double p0 = 0.35, p1 = 0.65;
  const auto d = parity_dist(WeightVector({p0, p1}), 2);
  CHECK(d(make_config({0, 0})) == doctest::Approx(p0 * p0 + p1 * p1).epsilon(1e-14));
  CHECK(d(make_config({1, 1})) == doctest::Approx(2 * p0 * p1).epsilon(1e-14));

  CHECK_THROWS_AS(parity_dist(WeightVector({0.5, 0.5}), 3), std::invalid_argument);
}

TEST_CASE("parity DP matches exhaustive enumeration exactly") {
  Rng rng(11);
  for (int bins = 1; bins <= 5; ++bins)
    for (int trial = 0; trial < 3; ++trial) {
      std::vector<cpp_rational> w(bins);
      long long den = 0;
      std::vector<long long> num(bins);
      for (auto& n : num) den += n = 1 + uniform_index(rng, 9);
      for (int i = 0; i < bins; ++i) w[i] = cpp_rational(num[i], den);
      for (int k = 0; k <= 6; ++k) {
        const auto dp = parity_state_law<cpp_rational>(w, k);
        CHECK(dp == enumerate_parity(w, k));
      }
    }
}

TEST_CASE("prefix order") {
  const auto a = make_config({0, 0, 1, 1}), b = make_config({1, 1, 0, 0});
  CHECK(prefix_leq(a, a));
  CHECK(prefix_leq(a, b));
  CHECK_FALSE(prefix_leq(b, a));
  const auto c = make_config({1, 0, 0, 1}), e = make_config({0, 1, 1, 0});
  CHECK_FALSE(prefix_leq(c, e));
  CHECK_FALSE(prefix_leq(e, c));
  CHECK_THROWS_AS(prefix_leq(a, make_config({1, 1})), std::invalid_argument);

  // Partial order axioms on random triples.
  Rng rng(5);
  for (int i = 0; i < 5000; ++i) {
    const int len = 5;
    const ParityConfig x{uniform_index(rng, 32), len}, y{uniform_index(rng, 32), len}, z{uniform_index(rng, 32), len};
    CHECK(prefix_leq(x, x));
    if (prefix_leq(x, y) && prefix_leq(y, x)) CHECK(x == y);
    if (prefix_leq(x, y) && prefix_leq(y, z)) CHECK(prefix_leq(x, z));
  }
}

TEST_CASE("majorization basics") {
  Rng rng(7);
  for (int len = 1; len <= 6; ++len)
    for (int i = 0; i < 20; ++i) {
      const auto d = random_dist(rng, len);
      CHECK(majorization_leq(d, d));
      CHECK(majorization_leq(DistOnSigma::uniform(len), d));
    }
  const DistOnSigma point(3, {1, 0, 0, 0}), two(3, {0.5, 0.5, 0, 0});
  CHECK(majorization_leq(two, point));
  CHECK_FALSE(majorization_leq(point, two));
  CHECK_THROWS_AS(majorization_leq(point, DistOnSigma::uniform(2)), std::invalid_argument);
}

TEST_CASE("majorization agrees with the convex-function and T-transform oracles") {
  Rng rng(13);
  int comparable = 0, incomparable = 0;
  for (int len : {3, 4})
    for (int i = 0; i < 3000; ++i) {
      const auto nu = random_dist(rng, len);
      // Half the pairs are majorized by construction.
      const auto mu = i % 2 ? smear(nu, rng) : random_dist(rng, len);
      const bool m = majorization_leq(mu, nu, 1e-12);
      (m ? comparable : incomparable)++;
      CHECK(m == hockey_stick_leq(mu, nu, 1e-12));
      CHECK(m == t_transform_reachable(mu, nu, 1e-10));
      if (m) CHECK(power_family_leq(mu, nu));
      if (i % 2) CHECK(m);
    }
  CHECK(comparable > 1000);
  CHECK(incomparable > 500);
}

TEST_CASE("monotonicity of the parity law in the prefix order") {
  CHECK(lemma38i_check(WeightVector({0.1, 0.2, 0.3, 0.4}), 0).empty());
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const WeightVector w(random_simplex(rng, 4));
    for (int k = 1; k <= 3; ++k) CHECK(lemma38i_check(w, k).empty());
  }
  for (int bins = 2; bins <= 9; ++bins) {
    const WeightVector w(random_simplex(rng, bins));
    for (int k = 1; k <= 8; ++k) CHECK(lemma38i_check(w, k).empty());
  }
  // Without the ordering hypothesis the monotonicity fails.
  const std::vector<double> heavy_first{0.7, 0.1, 0.1, 0.1};
  const auto bad = lemma38i_check_unsorted(heavy_first, 1);
  CHECK_FALSE(bad.empty());
  const auto it = std::find_if(bad.begin(), bad.end(), [](const auto& pr) {
    return pr.first == make_config({0, 0, 1, 1}) && pr.second == make_config({1, 1, 0, 0});
  });
  CHECK(it != bad.end());
}

TEST_CASE("parity coupling is ordered and has the right marginals") {
  Rng rng(19);
  {
    const WeightVector w({0.25, 0.25, 0.25, 0.25});
    const auto [lo, hi] = couple_parity(w, 0, rng);
    CHECK(lo.bits == 0);
    CHECK(prefix_leq(lo, hi));
  }
  const WeightVector w({0.1, 0.15, 0.3, 0.45});
  const auto sigma = sigma_elements(4);
  for (int k = 0; k <= 3; ++k) {
    std::vector<double> c_lo(sigma.size(), 0.0), c_hi(sigma.size(), 0.0);
    long violations = 0;
    const int n = 1'000'000;
    for (int i = 0; i < n; ++i) {
      const auto [lo, hi] = couple_parity(w, k, rng);
      if (!prefix_leq(lo, hi)) ++violations;
      REQUIRE(lo.in_sigma());
      REQUIRE(hi.in_sigma());
      if (i < 100000) {
        c_lo[lo.bits >> 1] += 1;
        c_hi[hi.bits >> 1] += 1;
      }
    }
    CHECK(violations == 0);
    const auto p_lo = parity_dist(w, 2 * k), p_hi = parity_dist(w, 2 * k + 2);
    std::vector<double> e_lo(sigma.size()), e_hi(sigma.size());
    for (std::size_t j = 0; j < sigma.size(); ++j) {
      e_lo[j] = 1e5 * p_lo.masses()[j];
      e_hi[j] = 1e5 * p_hi.masses()[j];
    }
    if (k > 0) CHECK(chi_square_gof(c_lo, e_lo).p_value > 0.01);
    CHECK(chi_square_gof(c_hi, e_hi).p_value > 0.01);
  }
}

TEST_CASE("walk probability ratio bound") {
  CHECK(lemma37_inequality(3, 3, 1));
  CHECK(lemma37_inequality(0, 2, 0));
  for (int l = 0; l <= 40; ++l)
    for (int k = 0; k <= l; ++k)
      for (int x = -k; x <= k; ++x)
        if ((k - x) % 2 == 0 && (l - x) % 2 == 0) CHECK(lemma37_inequality(k, l, x));
  CHECK_THROWS_AS(lemma37_inequality(2, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(lemma37_inequality(1, 2, 1), std::invalid_argument);
  CHECK_THROWS_AS(lemma37_inequality(2, 4, 4), std::invalid_argument);
}

TEST_CASE("likelihood ratio order of the jump counts") {
  CHECK(lr_order_check(1.0, 0, 60));
  CHECK(lr_order_check(0.0, 3, 10));
  for (double rate : {0.3, 1.0, 2.5, 6.0})
    for (int x : {0, 1, 2, 3, -2}) {
      CHECK(lr_order_check(rate, x, 80));
      CHECK(cdf_dominance_check(rate, x, 80));
    }
  // The conditional laws match closed forms: the fast normaliser is a
  // modified Bessel term and the slow one a hyperbolic cosine.
  const auto laws = conditional_jump_laws(1.0, 0, 60);
  CHECK(laws.fast[0] == doctest::Approx(1.0 / std::cyl_bessel_i(0.0, 1.0)).epsilon(1e-12));
  CHECK(laws.slow[0] == doctest::Approx(1.0 / std::cosh(0.5)).epsilon(1e-12));
  CHECK(laws.fast[1] == 0.0);
  CHECK_THROWS_AS(lr_order_check(5.0, 0, 10), std::domain_error);
  CHECK_THROWS_AS(conditional_jump_laws(1.0, 5, 3), std::invalid_argument);
}

TEST_CASE("jump mixtures are ordered by majorization") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const WeightVector w(random_simplex(rng, 2 + trial % 5));
    for (double rate : {0.5, 2.0, 5.0})
      for (int x : {0, 2}) {
        const auto [mu, nu] = jump_mixture_measures(w, rate, x, 80);
        CHECK(majorization_leq(mu, nu));
      }
  }
  CHECK_THROWS_AS(jump_mixture_measures(WeightVector({0.5, 0.5}), 1.0, 1, 40), std::invalid_argument);
}
