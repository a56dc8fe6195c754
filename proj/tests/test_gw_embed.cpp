#include <cmath>
#include <stdexcept>

#include "brwd/gw_embed.hpp"
#include "doctest.h"

using namespace brwd;

namespace {

BrwParams params(double kappa, double lambda, double alpha, std::vector<double> q) {
  BrwParams p;
  p.kappa = kappa;
  p.lambda = lambda;
  p.alpha = alpha;
  p.offspring = std::move(q);
  return p;
}

}  // namespace

TEST_CASE("offspring sample basics") {
  const DisasterField f(1, 1.0, 1);
  const auto walker = params(2.0, 0.0, 1.0, {0, 0, 1});
  const auto s = sample_offspring(f, walker, 1.0, 1, 20000, 2);
  CHECK(s.pmf.size() <= 2);
  double total = 0.0, mean = 0.0;
  for (std::size_t j = 0; j < s.pmf.size(); ++j) {
    total += s.pmf[j];
    mean += static_cast<double>(j) * s.pmf[j];
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(mean == doctest::Approx(s.mean).epsilon(1e-12));
  // Without branching the first-period mean is the pinned survival itself.
  Rng rng(3);
  const auto pinned = estimate_survival(f, 2.0, 1.0, 100000, true, rng);
  CHECK(std::abs(s.mean - pinned.value) <= 3.0 * std::hypot(s.std_err, pinned.std_err));

  CHECK_THROWS_AS(sample_offspring(f, walker, 1.0, 0, 10, 1), std::invalid_argument);
  CHECK_THROWS_AS(sample_offspring(f, walker, -1.0, 1, 10, 1), std::invalid_argument);
}

TEST_CASE("frozen particles without disasters give the branching mean") {
  const auto p = params(0.0, 1.0, 0.0, {0.25, 0.0, 0.75});
  const auto s = sample_offspring(DisasterField(4, 0.0, 1), p, 1.5, 2, 20000, 5);
  CHECK(std::abs(s.mean - std::exp(0.5 * 1.5)) <= 3.0 * s.std_err);
}

TEST_CASE("period identity") {
  const auto p = params(2.0, 0.5, 1.0, {0, 0, 1});
  const DisasterField f(6, 1.0, 1);
  const auto zero = identity_3_8_check(f, p, 0.0, 10, 10, 1);
  CHECK(zero.lhs == 1.0);
  CHECK(zero.rhs == 1.0);
  const auto c = identity_3_8_check(f, p, 2.0, 20000, 100000, 7);
  CHECK(std::abs(c.z) <= 3.0);
  CHECK(c.lhs > 0.0);
}

TEST_CASE("non-extinction bound") {
  const DisasterField f(8, 1.0, 1);
  const auto no_death = params(1.0, 1.0, 1.0, {0, 0, 1});
  const auto b = nonextinction_bound_check(f, no_death, 1.0, 20000, 50000, 9);
  CHECK_FALSE(b.violated);
  CHECK(b.lhs >= b.rhs - 3.0 * std::hypot(b.lhs_se, b.rhs_se));

  const auto walker = params(1.0, 0.0, 1.0, {0, 0, 1});
  const auto w = nonextinction_bound_check(f, walker, 1.0, 20000, 50000, 10);
  CHECK(std::abs(w.lhs - w.rhs) <= 3.0 * std::hypot(w.lhs_se, w.rhs_se));

  int violations = 0;
  const auto generic = params(1.0, 1.0, 1.0, {0.3, 0.0, 0.7});
  for (std::uint64_t i = 0; i < 20; ++i) {
    violations += nonextinction_bound_check(DisasterField(100 + i, 1.0, 1), generic, 1.0, 2000, 5000, i).violated;
  }
  CHECK(violations == 0);
}

TEST_CASE("phase classification edge cases") {
  const auto free = params(1.0, 1.0, 0.0, {0, 0, 1});
  const auto v = phase_classify(free, 5.0, 10, 100, 1);
  CHECK(v.p_hat == 0.0);
  CHECK(v.verdict == Phase::supercritical);

  const auto doomed = params(1.0, 1.0, 1.0, {1.0});
  const auto d = phase_classify(doomed, 10.0, 20, 1000, 2);
  CHECK(d.criterion <= -2.0 + 3.0 * d.std_err);
  CHECK(d.verdict == Phase::subcritical);
  CHECK(to_string(Phase::critical_band) == "critical-band");
}

TEST_CASE("periods are independent and identically distributed") {
  const auto p = params(1.0, 1.0, 1.0, {0, 0, 1});
  const auto r = offspring_independence(p, 1.0, 300, 100, 11);
  CHECK(r.correlation_p > 0.01);
  CHECK(r.homogeneity.p_value > 0.01);
  CHECK(r.ks_p > 0.01);
  CHECK(r.degenerate_fraction < 0.5);
}

TEST_CASE("period choice") {
  const double expected = 0.36787944117144233 * 0.4657596075936404;
  CHECK(annealed_pinned_survival(1.0, 1.0, 1, 1.0) == doctest::Approx(expected).epsilon(1e-13));
  const auto p = params(2.0, 0.5, 1.0, {0, 0, 1});
  const auto c = choose_period(p);
  CHECK(c.in_range);
  CHECK(c.expected_mean >= 0.5);
  CHECK(c.expected_mean <= 50.0);
  const auto doomed = params(8.0, 0.1, 3.0, {0, 0, 1});
  CHECK_FALSE(choose_period(doomed, 5.0).in_range);
  CHECK(choose_period(doomed, 5.0).T == 0.25);
}
