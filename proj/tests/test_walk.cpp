#include <boost/math/special_functions/bessel.hpp>
#include <cmath>
#include <map>

#include "brwd/stats.hpp"
#include "brwd/walk.hpp"
#include "doctest.h"

using namespace brwd;

namespace {

// Exact interval scan: a hit is a disaster inside an occupancy interval.
std::optional<double> brute_extinction(const WalkPath& p, const DisasterField& f) {
  std::optional<double> best;
  Site x = p.start;
  double a = 0.0;
  for (std::size_t i = 0; i <= p.jumps.size(); ++i) {
    const bool last = i == p.jumps.size();
    const double b = last ? p.horizon : p.jumps[i].time;
    for (double d : disasters_in_window(f, x, 0.0, p.horizon + 1.0)) {
      const bool inside = last ? (d >= a && d <= b) : (d >= a && d < b);
      if (inside && (!best || d < *best)) best = d;
    }
    if (!last) {
      x = p.jumps[i].site;
      a = b;
    }
  }
  return best;
}

// P(Z_k = 0) for the discrete simple walk on Z.
double return_prob(int k) {
  if (k % 2) return 0.0;
  return std::exp(std::lgamma(k + 1.0) - 2.0 * std::lgamma(k / 2 + 1.0) - k * std::log(2.0));
}

}  // namespace

TEST_CASE("frozen walk has no jumps") {
  Rng g(1);
  const auto p = simulate_walk(0.0, 2, 10.0, g, make_site({1, 1}));
  CHECK(p.jumps.empty());
  CHECK(p.position_at(5.0) == make_site({1, 1}));
}

TEST_CASE("jump counts and directions") {
  Rng g(2);
  RunningStats jumps;
  std::vector<double> dirs(4, 0.0);
  for (int i = 0; i < 10000; ++i) {
    const auto p = simulate_walk(1.5, 2, 2.0, g);
    jumps.add(static_cast<double>(p.jumps.size()));
    Site prev = p.start;
    for (const auto& j : p.jumps) {
      const Site d = j.site - prev;
      REQUIRE(sup_norm(d) == 1);
      REQUIRE(std::abs(d[0]) + std::abs(d[1]) == 1);
      dirs[d[0] == 1 ? 0 : d[0] == -1 ? 1 : d[1] == 1 ? 2 : 3] += 1;
      prev = j.site;
    }
  }
  CHECK(std::abs(jumps.mean() - 3.0) < 3.0 * std::sqrt(3.0 / 10000));
  const double total = dirs[0] + dirs[1] + dirs[2] + dirs[3];
  CHECK(chi_square_gof(dirs, std::vector<double>(4, total / 4)).p_value > 0.01);
}

TEST_CASE("position is cadlag") {
  WalkPath p;
  p.jumps = {{1.0, make_site({1})}, {2.0, make_site({2})}};
  p.horizon = 3.0;
  CHECK(p.position_at(0.999) == Site{});
  CHECK(p.position_at(1.0) == make_site({1}));
  CHECK(p.position_at(2.5) == make_site({2}));
}

TEST_CASE("extinction time") {
  Rng g(3);
  const DisasterField none(1, 0.0, 1);
  CHECK_FALSE(extinction_time(simulate_walk(2.0, 1, 10.0, g), none).has_value());

  const DisasterField f(4, 1.0, 1);
  const auto frozen = simulate_walk(0.0, 1, 10.0, g);
  const auto first = first_disaster_after(f, Site{}, 0.0, 10.0);
  CHECK(extinction_time(frozen, f) == first);

  for (int i = 0; i < 300; ++i) {
    const auto p = simulate_walk(3.0, 1, 4.0, g);
    REQUIRE(extinction_time(p, f) == brute_extinction(p, f));
  }
  CHECK_THROWS_AS(extinction_time(simulate_walk(1.0, 2, 1.0, g), f), std::invalid_argument);
}

TEST_CASE("walker_survives follows the simulated path") {
  const DisasterField f(5, 0.7, 1);
  DisasterCache cache(f);
  for (std::uint64_t s = 0; s < 300; ++s) {
    Rng a(s), b(s);
    const auto p = simulate_walk(2.0, 1, 3.0, a);
    const auto ext = extinction_time(p, cache);
    Site end;
    const bool alive = walker_survives(cache, 2.0, 3.0, b, &end);
    REQUIRE(alive == (!ext || *ext >= 3.0));
    if (alive) REQUIRE(end == p.position_at(3.0));
  }
}

TEST_CASE("survival is monotone in t on shared randomness") {
  DisasterCache cache(DisasterField(6, 1.0, 1));
  for (std::uint64_t s = 0; s < 500; ++s) {
    Rng a(s), b(s);
    const bool late = walker_survives(cache, 1.0, 2.0, a);
    const bool early = walker_survives(cache, 1.0, 1.0, b);
    if (late) REQUIRE(early);
  }
}

TEST_CASE("estimate_survival") {
  const DisasterField f(7, 1.0, 1);
  Rng g(8);
  CHECK(estimate_survival(f, 1.0, 0.0, 100, false, g).value == 1.0);
  Rng a(9), b(9);
  const auto unpinned = estimate_survival(f, 1.0, 1.0, 5000, false, a);
  const auto pinned = estimate_survival(f, 1.0, 1.0, 5000, true, b);
  CHECK(pinned.value <= unpinned.value);
  CHECK_THROWS_AS(estimate_survival(f, 1.0, 1.0, 0, false, g), std::invalid_argument);

  // No disasters: pinned probability is the Poisson mixture of return probabilities.
  double series = 0.0, w = std::exp(-1.0);
  for (int k = 0; k < 60; ++k) {
    series += w * return_prob(k);
    w /= (k + 1);
  }
  CHECK(series == doctest::Approx(0.4657596075936404).epsilon(1e-14));
  const auto e = estimate_survival(DisasterField(1, 0.0, 1), 1.0, 1.0, 100000, true, g);
  CHECK(std::abs(e.value - series) <= 3.0 * e.std_err);
}

TEST_CASE("annealed survival") {
  CHECK(annealed_survival(1.0, 1.0, 1, 0.0, 1000, 1).value == 1.0);
  const auto e1 = annealed_survival(2.0, 1.0, 1, 1.0, 50000, 2);
  CHECK(std::abs(e1.value - std::exp(-1.0)) <= 3.0 * e1.std_err);
  const auto e2 = annealed_survival(2.0, 2.0, 2, 1.0, 50000, 3);
  CHECK(std::abs(e2.value - std::exp(-2.0)) <= 3.0 * e2.std_err);
  CHECK(std::exp(-2.0) == doctest::Approx(0.13534).epsilon(1e-4));
}

TEST_CASE("forward equation without disasters") {
  DisasterCache cache(DisasterField(1, 0.0, 1));
  const double ts[] = {0.0, 1.0, 5.0};
  const auto q = solve_quenched_survival(cache, 2.0, ts);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(q.log_survival[i] == doctest::Approx(0.0).epsilon(1e-9));
    const double kt = 2.0 * ts[i];
    CHECK(std::exp(q.log_pinned[i]) == doctest::Approx(std::exp(-kt) * boost::math::cyl_bessel_i(0, kt)).epsilon(1e-10));
  }
  // d = 2 factorizes into two independent coordinates at rate kappa / 2.
  DisasterCache c2(DisasterField(1, 0.0, 2));
  const double t2[] = {3.0};
  const auto q2 = solve_quenched_survival(c2, 2.0, t2);
  const double one = std::exp(-3.0) * boost::math::cyl_bessel_i(0, 3.0);
  CHECK(std::exp(q2.log_pinned[0]) == doctest::Approx(one * one).epsilon(1e-10));
}

TEST_CASE("forward equation matches walkers in a fixed field") {
  const DisasterField f(10, 1.0, 1);
  DisasterCache cache(f);
  const double ts[] = {1.0, 3.0};
  const auto q = solve_quenched_survival(cache, 2.0, ts);
  for (std::size_t i = 0; i < 2; ++i) {
    for (bool pin : {false, true}) {
      Rng g(11 + i);
      const auto e = estimate_survival(cache, 2.0, ts[i], 200000, pin, g);
      const double exact = std::exp(pin ? q.log_pinned[i] : q.log_survival[i]);
      CHECK(std::abs(e.value - exact) <= 3.0 * e.std_err + 1e-12);
    }
  }
}

TEST_CASE("forward equation frozen walker") {
  const DisasterField f(12, 1.0, 1);
  DisasterCache cache(f);
  const auto first = *first_disaster_after(f, Site{}, 0.0, 1e9);
  const double ts[] = {first * 0.5, first, first * 1.5};
  const auto q = solve_quenched_survival(cache, 0.0, ts);
  CHECK(q.log_survival[0] == 0.0);
  CHECK(q.log_survival[1] == 0.0);
  CHECK(std::isinf(q.log_survival[2]));
}

TEST_CASE("forward equation box is large enough") {
  DisasterCache cache(DisasterField(13, 1.0, 1));
  const double ts[] = {20.0};
  const auto a = solve_quenched_survival(cache, 2.0, ts);
  const auto b = solve_quenched_survival(cache, 2.0, ts, 2 * a.radius);
  CHECK(a.log_survival[0] == doctest::Approx(b.log_survival[0]).epsilon(1e-6));
  CHECK(a.log_pinned[0] == doctest::Approx(b.log_pinned[0]).epsilon(1e-6));
  CHECK(a.log_survival[0] < -10.0);
  CHECK_THROWS_AS(solve_quenched_survival(cache, 2.0, std::vector<double>{2.0, 1.0}), std::invalid_argument);
}

TEST_CASE("lyapunov estimator edge cases") {
  LyapunovOptions opt;
  opt.alpha = 0.0;
  opt.n_env = 3;
  opt.t = 5.0;
  const auto zero = estimate_lyapunov(opt, 1);
  CHECK(zero.p_hat == 0.0);
  CHECK(zero.censor_fraction == 0.0);

  opt.alpha = 1.0;
  opt.kappa = 0.0;
  opt.n_env = 20;
  opt.t = 10.0;
  opt.n_walkers = 100;
  const auto frozen = estimate_lyapunov(opt, 2);
  CHECK(frozen.dominated_by_censoring);
  CHECK(frozen.p_hat == doctest::Approx(std::log(1.0 / 200.0) / 10.0 * frozen.censor_fraction));

  opt.kappa = 1.0;
  opt.method = SurvivalMethod::walkers;
  opt.t = 1.0;
  const auto w = estimate_lyapunov(opt, 3);
  CHECK(w.p_hat < 0.0);
  CHECK_THROWS_AS(estimate_lyapunov(LyapunovOptions{.t = 0.0}, 1), std::invalid_argument);
}

TEST_CASE("lyapunov estimate is reproducible across thread counts") {
  LyapunovOptions opt;
  opt.kappa = 2.0;
  opt.t = 5.0;
  opt.n_env = 8;
  const auto a = estimate_lyapunov(opt, 4);
  opt.threads = 4;
  const auto b = estimate_lyapunov(opt, 4);
  CHECK(a.p_hat == b.p_hat);
  CHECK(a.std_err == b.std_err);
}

TEST_CASE("concentration profile edge cases") {
  LyapunovOptions opt;
  opt.alpha = 0.0;
  opt.n_env = 4;
  const double ts[] = {2.0, 1.0};
  const auto rows = concentration_profile(opt, ts, 5);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].t == 2.0);
  CHECK(rows[0].std_log == 0.0);
  CHECK(rows[1].std_log == 0.0);

  opt.alpha = 1.0;
  opt.n_env = 1;
  const auto single = concentration_profile(opt, ts, 5);
  CHECK_FALSE(single[0].std_valid);
  CHECK(std::isnan(single[0].std_log));
  CHECK_THROWS_AS(concentration_profile(opt, std::vector<double>{0.0}, 5), std::invalid_argument);
}
