// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "brwd/boxes.hpp"
#include "brwd/brw.hpp"
#include "brwd/experiments.hpp"
#include "brwd/gw_embed.hpp"
#include "brwd/percolation.hpp"
#include "brwd/random.hpp"
#include "brwd/verify.hpp"
#include "brwd/walk.hpp"

using namespace brwd;

namespace {

// Fixed before the first acceptance run; never tuned.
constexpr std::uint64_t kSeed = 20261016;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string f(const char* fmt, double a) {
  char buf[96];
  std::snprintf(buf, sizeof buf, fmt, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

BrwParams make_params(double kappa, double lambda, std::vector<double> q, int dim = 1, double alpha = 1.0) {
  BrwParams p;
  p.kappa = kappa;
  p.lambda = lambda;
  p.alpha = alpha;
  p.offspring = std::move(q);
  p.dim = dim;
  return p;
}

LyapunovEstimate lyapunov(double kappa, bool pinned, std::uint64_t seed) {
  LyapunovOptions o;
  o.kappa = kappa;
  o.alpha = 1.0;
  o.dim = 1;
  o.t = 20.0;
  o.n_env = 200;
  o.n_walkers = 10000;
  o.pinned = pinned;
  return estimate_lyapunov(o, seed);
}

Outcome annealed_identity() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  int cell = 0;
  for (int dim : {1, 2})
    for (double kappa : {0.5, 2.0, 8.0})
      for (double t : {0.5, 1.0, 2.0}) {
        const auto e = annealed_survival(kappa, 1.0, dim, t, 100000, derive_seed(kSeed, "annealed", cell++));
        worst = std::max(worst, std::abs(e.value - std::exp(-t)) / e.std_err);
      }
  const double secs = seconds_since(t0);
  return {worst <= 3.0 && secs <= 300.0,
          "max |z| " + f("%.2f", worst) + " over 18 cells, n = 1e5 each, " + f("%.1f s", secs)};
}

Outcome lyapunov_bound() {
  bool ok = true;
  std::string d;
  for (double kappa : {0.5, 2.0, 8.0}) {
    const auto e = lyapunov(kappa, false, derive_seed(kSeed, "lyapunov", static_cast<std::uint64_t>(kappa * 10)));
    ok = ok && e.p_hat <= -0.9 && e.censor_fraction < 0.2;
    d += "p(" + f("%g", kappa) + ") = " + f("%.4f", e.p_hat) + " +- " + f("%.4f", e.std_err) + " cens " +
         f("%.2f", e.censor_fraction) + "; ";
  }
  return {ok, d};
}

Outcome limit_trends() {
  auto p = [](double kappa) {
    return lyapunov(kappa, false, derive_seed(kSeed, "lyapunov", static_cast<std::uint64_t>(kappa * 10)));
  };
  const auto small = p(0.2), mid = p(8.0), large = p(32.0);
  const bool ok = small.p_hat < mid.p_hat - 0.3 && large.p_hat >= -1.5;
  return {ok, "p(0.2) = " + f("%.4f", small.p_hat) + ", p(8) = " + f("%.4f", mid.p_hat) + ", p(32) = " +
                  f("%.4f", large.p_hat)};
}

Outcome pinned_rate() {
  const auto seed = derive_seed(kSeed, "pinned");
  const auto free = lyapunov(2.0, false, seed), pinned = lyapunov(2.0, true, seed);
  const double gap = std::abs(pinned.p_hat - free.p_hat);
  const double sigma = std::hypot(free.std_err, pinned.std_err);
  const double allowed = 0.15 + 3.0 * sigma;
  return {gap <= allowed, "unpinned " + f("%.4f", free.p_hat) + ", pinned " + f("%.4f", pinned.p_hat) + ", gap " +
                              f("%.4f", gap) + " vs allowed " + f("%.4f", allowed)};
}

Outcome field_fraction(const std::function<double(std::size_t)>& z, const char* what) {
  int within = 0;
  for (std::size_t i = 0; i < 50; ++i) within += std::abs(z(i)) <= 3.0;
  return {within >= 48, std::to_string(within) + " of 50 fields with |z| <= 3 (" + what + ")"};
}

Outcome moment_identity() {
  const auto p = make_params(1.0, 1.0, {0.5, 0.0, 0.5});
  return field_fraction(
      [&](std::size_t i) {
        const DisasterField field(derive_seed(kSeed, "moment-field", i), 1.0, 1);
        return moment_identity_check(p, field, 2.0, 20000, 100000, derive_seed(kSeed, "moment", i)).z;
      },
      "t = 2");
}

Outcome embedded_identity() {
  const auto p = make_params(1.0, 1.0, {0.5, 0.0, 0.5});
  return field_fraction(
      [&](std::size_t i) {
        const DisasterField field(derive_seed(kSeed, "embed-field", i), 1.0, 1);
        return identity_3_8_check(field, p, 2.0, 20000, 100000, derive_seed(kSeed, "embed", i)).z;
      },
      "T = 2");
}

ReplicaOptions capped(std::size_t max_alive) {
  ReplicaOptions ro;
  ro.caps.max_alive = max_alive;
  return ro;
}

Outcome phase_coherence() {
  const auto sup = make_params(8.0, 2.0, {0.0, 0.0, 1.0});
  const auto sub = make_params(1.0, 0.2, {0.0, 0.0, 1.0});
  const auto v_sup = phase_classify(sup, 20.0, 200, 10000, derive_seed(kSeed, "phase-lyap", 1));
  const auto v_sub = phase_classify(sub, 20.0, 200, 10000, derive_seed(kSeed, "phase-lyap", 2));
  const auto s_sup = survival_frequency(sup, 50.0, 500, derive_seed(kSeed, "phase-surv", 1), capped(10000));
  const auto s_sub = survival_frequency(sub, 50.0, 500, derive_seed(kSeed, "phase-surv", 2), capped(10000));
  const bool ok = v_sup.verdict == Phase::supercritical &&
                  s_sup.estimate.value - 3.0 * s_sup.estimate.std_err > 0.0 && v_sub.verdict == Phase::subcritical &&
                  s_sub.estimate.value < 0.02;
  return {ok, std::string(to_string(v_sup.verdict)) + " (" + f("%.3f", v_sup.criterion) + "), survival " +
                  f("%.3f", s_sup.estimate.value) + " +- " + f("%.3f", s_sup.estimate.std_err) + "; " +
                  std::string(to_string(v_sub.verdict)) + " (" + f("%.3f", v_sub.criterion) + "), survival " +
                  f("%.3f", s_sub.estimate.value)};
}

Outcome exponential_growth() {
  GrowthOptions go;
  go.replicas = capped(10000);
  const auto g = growth_rate(make_params(8.0, 2.0, {0.0, 0.0, 1.0}), 12.0, 100, derive_seed(kSeed, "growth"), go);
  if (!g) return {false, "no surviving replica"};
  return {g->slope > 3.0 * g->std_err, "slope " + f("%.4f", g->slope) + " +- " + f("%.4f", g->std_err) + " over " +
                                           std::to_string(g->n_survivors) + " survivors"};
}

Outcome suite(const SuiteResult& r) {
  return {r.passed, std::to_string(r.checks) + " checks, " + std::to_string(r.failures) + " failures, " + r.detail};
}

Outcome two_suites(const SuiteResult& a, const SuiteResult& b) {
  return {a.passed && b.passed, a.name + ": " + std::to_string(a.failures) + "/" + std::to_string(a.checks) + " failed; " +
                                    b.name + ": " + std::to_string(b.failures) + "/" + std::to_string(b.checks) + " failed"};
}

Outcome fkg_one_sided() {
  const auto p = make_params(2.0, 1.0, {0.0, 0.0, 1.0});
  SpaceTimeBox box;
  box.L = 3;
  box.T = 1.0;
  const auto suite = fkg_functional_suite(1);
  const auto eta1 = point_configuration(Site{}), eta2 = point_configuration(make_site({1}));
  std::size_t n = 0, below = 0;
  double min_z = 0.0;
  for (std::uint64_t b = 0; b < 20; ++b)
    for (const auto& e : fkg_suite_test(p, eta1, eta2, box, suite, 1000, derive_seed(kSeed, "fkg", b))) {
      ++n;
      below += e.cov < -3.0 * e.std_err;
      if (e.std_err > 0.0) min_z = std::min(min_z, e.cov / e.std_err);
    }
  return {below == 0, std::to_string(below) + " of " + std::to_string(n) + " estimates below -3 sigma, min z " +
                          f("%.2f", min_z)};
}

Outcome percolation_sanity() {
  const auto s = independent_perc({0.5, 0.95}, 50, 2000, derive_seed(kSeed, "perc-independent"));
  const bool split = s[1].estimate.value - 3.0 * s[1].estimate.std_err >= 0.5 &&
                     s[0].estimate.value + 3.0 * s[0].estimate.std_err <= 0.01;
  // Pathwise: on each replica's uniforms, reaching row K is monotone in p.
  std::size_t broken = 0;
  for (std::size_t rep = 0; rep < 200; ++rep) {
    bool prev = false;
    for (int i = 0; i <= 20; ++i) {
      const bool now = independent_lattice(0.05 * i, 50, derive_seed(kSeed, "perc-path"), rep).reaches_row(50);
      broken += prev && !now;
      prev = now;
    }
  }
  const auto p = make_params(4.0, 3.0, {0.0, 0.0, 1.0});
  PercOptions opt;
  opt.L = 2;
  opt.T = 0.5;
  opt.n = 0;
  opt.S = 2;
  opt.K = 4;
  opt.caps.max_alive = 20000;
  const auto probe = dependence_range_probe(
      [&](std::size_t r) { return brw_lattice_replica(p, opt, derive_seed(kSeed, "perc-brw"), r); }, 4, 3, 800);
  const bool uncorrelated = std::abs(probe.correlation) <= 3.0 * probe.std_err;
  return {split && broken == 0 && uncorrelated,
          "survival " + f("%.4f", s[1].estimate.value) + " at 0.95, " + f("%.4f", s[0].estimate.value) +
              " at 0.5; " + std::to_string(broken) + " monotonicity breaks; corr at distance 3 " +
              f("%.4f", probe.correlation) + " +- " + f("%.4f", probe.std_err) + " over " +
              std::to_string(probe.n_pairs) + " pairs"};
}

Outcome concentration_trend() {
  bool ok = true;
  std::string d;
  const std::vector<double> ts{5.0, 10.0, 20.0};
  for (double kappa : {0.5, 2.0, 8.0}) {
    LyapunovOptions o;
    o.kappa = kappa;
    o.t = 20.0;
    o.n_env = 200;
    const auto rows = concentration_profile(o, ts, derive_seed(kSeed, "profile", static_cast<std::uint64_t>(kappa * 10)));
    d += "kappa " + f("%g", kappa) + ":";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double r = rows[i].std_log / rows[i].t;
      d += " " + f("%.4f", r);
      if (i == 0) continue;
      const double prev = rows[i - 1].std_log / rows[i - 1].t;
      const double slack = 2.0 * std::hypot(rows[i].std_log_err / rows[i].t, rows[i - 1].std_log_err / rows[i - 1].t);
      ok = ok && rows[i].std_valid && r <= prev + slack;
    }
    d += "; ";
  }
  return {ok, d};
}

// Small budgets: the property is byte identity, not accuracy.
std::vector<std::pair<std::string, RunConfig>> determinism_runs() {
  auto cfg = [](std::initializer_list<std::pair<const char*, const char*>> kv) {
    RunConfig c;
    c.set("seed", "99");
    for (const auto& [k, v] : kv) c.set(k, v);
    return c;
  };
  return {
      {"annealed", cfg({{"n_samples", "2000"}})},
      {"lyapunov", cfg({{"n_env", "8"}, {"t", "5"}, {"pinned", "both"}, {"t_list", "2,5"}})},
      {"brw-survival", cfg({{"n_reps", "40"}, {"lambda_list", "1,2"}, {"growth", "yes"}, {"growth_reps", "10"},
                            {"growth_horizon", "6"}})},
      {"moment-check", cfg({{"n_fields", "4"}, {"n_reps", "200"}, {"n_walkers", "500"}})},
      {"embed", cfg({{"n_fields", "4"}, {"n_reps", "200"}, {"n_walkers", "500"}})},
      {"embed", cfg({{"mode", "independence"}, {"n_fields", "6"}, {"n_reps", "50"}})},
      {"phase", cfg({{"n_env", "8"}, {"t_lyap", "5"}, {"n_reps", "30"}, {"horizon", "8"}})},
      {"sweep", cfg({{"kappa_list", "1,4"}, {"lambda_list", "0.5,2"}, {"n_env", "8"}, {"t_lyap", "5"}, {"n_reps", "30"},
                     {"horizon", "6"}})},
      {"sweep", cfg({{"grid", "p"}, {"K", "20"}, {"n_reps", "100"}})},
      {"boxes-fkg", cfg({{"n_reps", "100"}, {"batches", "2"}, {"pairs", "all"}})},
      {"boxes-fkg", cfg({{"mode", "corollary49"}, {"n_reps", "300"}, {"S", "2"}})},
      {"perc", cfg({{"n_reps", "200"}})},
      {"perc", cfg({{"mode", "brw"}, {"n_reps", "60"}})},
      {"verify", cfg({})},
  };
}

Outcome determinism() {
  std::size_t mismatches = 0, runs = 0;
  std::string names;
  for (const auto& [name, cfg] : determinism_runs()) {
    std::vector<std::string> outputs;
    for (int threads : {1, 1, 8, 8}) {
      std::ostringstream os;
      const auto out = run_experiment(name, cfg, {threads, false});
      write_records(os, out.records, OutputFormat::csv);
      write_records(os, out.records, OutputFormat::json);
      outputs.push_back(os.str());
    }
    ++runs;
    if (std::adjacent_find(outputs.begin(), outputs.end(), std::not_equal_to<>()) != outputs.end()) {
      ++mismatches;
      names += " " + name;
    }
  }
  return {mismatches == 0, std::to_string(runs) + " runs over every subcommand, threads 1,1,8,8; " +
                               std::to_string(mismatches) + " mismatches" + names};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* title;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "annealed identity", annealed_identity},
      {2, "decay rate upper bound", lyapunov_bound},
      {3, "decay rate limit trends", limit_trends},
      {4, "pinned and unpinned rates agree", pinned_rate},
      {5, "first moment identity", moment_identity},
      {6, "embedded process mean identity", embedded_identity},
      {7, "phase verdict matches survival", phase_coherence},
      {8, "exponential growth on survival", exponential_growth},
      {9, "binomial parity closed form", [] { return suite(verify_parity_closed_form(30)); }},
      {10, "parity law monotone in prefix order", [] { return suite(verify_parity_monotone(kSeed, 4, 3, 100)); }},
      {11, "ordered parity coupling", [] { return suite(verify_parity_coupling(kSeed, 100000)); }},
      {12, "walk ratio bound and likelihood-ratio order", [] { return two_suites(verify_walk_ratio(40), verify_lr_order()); }},
      {13, "product inequality", [] { return suite(verify_lemma47(kSeed, 10000)); }},
      {14, "one-sided positive correlation", fkg_one_sided},
      {15, "percolation sanity and short-range dependence", percolation_sanity},
      {16, "concentration trend", concentration_trend},
      {17, "determinism", determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2d %s  %s | %s [%.1f s]\n", c.id, o.pass ? "PASS" : "FAIL", c.title, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
