#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "brwd/brw.hpp"
#include "brwd/stats.hpp"
#include "doctest.h"

using namespace brwd;

namespace {

BrwParams params(double kappa, double lambda, double alpha, std::vector<double> q, int dim = 1) {
  BrwParams p;
  p.kappa = kappa;
  p.lambda = lambda;
  p.alpha = alpha;
  p.offspring = std::move(q);
  p.dim = dim;
  return p;
}

SimOptions logged(double horizon) {
  SimOptions o;
  o.horizon = horizon;
  o.record_log = true;
  return o;
}

class DisasterAudit final : public SimObserver {
 public:
  void on_start(double, const PopulationView&) override {}
  void on_event(const Event& ev, const PopulationView& pop) override {
    if (ev.kind == EventKind::kill) {
      ++kills;
      if (pop.count_at(ev.site) != 0) ++violations;
    }
  }
  int kills = 0;
  int violations = 0;
};

}  // namespace

TEST_CASE("parameter validation") {
  CHECK_NOTHROW(params(1, 1, 1, {0.5, 0.0, 0.5}).validate());
  CHECK_THROWS_AS(params(1, 1, 1, {0.5, 0.4}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(params(1, 1, 1, {0.0, 1.0}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(params(-1, 1, 1, {0, 0, 1}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(params(1, 1, 1, std::vector<double>(65, 1.0 / 65)).validate(), std::invalid_argument);
  CHECK_THROWS_AS(params(1, 1, 1, {0, 0, 1}, 0).validate(), std::invalid_argument);
  CHECK(params(1, 2, 1, {0.25, 0.0, 0.75}).mean_offspring() == doctest::Approx(1.5));
  CHECK(params(1, 2, 1, {0.25, 0.0, 0.75}).growth_exponent() == doctest::Approx(1.0));
}

TEST_CASE("no branching reduces to the single walker") {
  const DisasterField f(3, 1.0, 1);
  const auto p = params(2.0, 0.0, 1.0, {0, 0, 1});
  int died = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto res = simulate(p, point_configuration(Site{}), f, logged(3.0), s);
    const auto recs = particle_records(*res.log);
    REQUIRE(recs.size() == 1);
    const auto ext = extinction_time(recs[0].path, f);
    if (recs[0].end_cause == EndCause::disaster) {
      ++died;
      REQUIRE(ext.has_value());
      CHECK(*ext == recs[0].end_time);
    } else {
      CHECK(recs[0].end_cause == EndCause::horizon);
      CHECK_FALSE(ext.has_value());
    }
  }
  CHECK(died > 0);
}

TEST_CASE("certain death at branching") {
  const auto p = params(1.0, 1.0, 1.0, {1.0});
  int alive = 0;
  for (std::uint64_t s = 0; s < 500; ++s) {
    const auto res = simulate(p, point_configuration(Site{}), DisasterField(s, 1.0, 1), SimOptions{.horizon = 50.0}, s);
    alive += res.final_alive > 0;
  }
  CHECK(alive == 0);
}

TEST_CASE("pure birth population matches the branching mean") {
  const auto p = params(0.0, 1.0, 0.0, {0, 0, 1});
  RunningStats n;
  const DisasterField f(1, 0.0, 1);
  for (std::uint64_t s = 0; s < 10000; ++s) {
    const auto res = simulate(p, point_configuration(Site{}), f, SimOptions{.horizon = 1.0}, s);
    n.add(static_cast<double>(res.final_alive));
  }
  CHECK(std::abs(n.mean() - std::exp(1.0)) <= 3.0 * n.std_error());
}

TEST_CASE("snapshots agree with log replay") {
  const auto p = params(1.5, 1.0, 0.8, {0.3, 0.0, 0.4, 0.3}, 2);
  const DisasterField f(5, 0.8, 2);
  for (auto flavor : {SnapshotFlavor::left_limit, SnapshotFlavor::right_limit}) {
    for (std::uint64_t s = 0; s < 40; ++s) {
      SimOptions o = logged(4.0);
      o.flavor = flavor;
      o.snapshot_times = {0.0, 0.7, 1.3, 2.0, 3.9};
      const auto res = simulate(p, block_configuration(2, 1, 2), f, o, s);
      REQUIRE(res.snapshots.size() == o.snapshot_times.size());
      for (const auto& snap : res.snapshots) {
        const auto rep = replay_snapshot(*res.log, snap.time, flavor);
        REQUIRE(rep.alive == snap.alive);
        const auto c = site_counts(snap);
        CHECK(total_count(c) == static_cast<std::int64_t>(snap.alive.size()));
        CHECK(dominates(snap, c));
        if (!c.empty()) {
          auto bumped = c;
          ++bumped.begin()->second;
          CHECK_FALSE(dominates(snap, bumped));
        }
      }
    }
  }
  CHECK(site_counts(Snapshot{}).empty());
  CHECK(dominates(Snapshot{}, Configuration{}));
}

TEST_CASE("event log round trip") {
  const auto p = params(1.0, 1.2, 0.5, {0.2, 0.0, 0.5, 0.3}, 2);
  const auto res = simulate(p, point_configuration(make_site({1, -1}), 2), DisasterField(7, 0.5, 2), logged(3.0), 8);
  std::stringstream ss;
  write_event_log(ss, *res.log);
  const auto back = read_event_log(ss);
  REQUIRE(back.events.size() == res.log->events.size());
  CHECK(back.dim == 2);
  CHECK(back.horizon == 3.0);
  for (std::size_t i = 0; i < back.events.size(); ++i) {
    const auto& a = back.events[i];
    const auto& b = res.log->events[i];
    REQUIRE(a.time == b.time);
    REQUIRE(a.kind == b.kind);
    REQUIRE(a.site == b.site);
    REQUIRE(a.count == b.count);
    if (b.node != kNoNode) REQUIRE(back.id_string(a.node) == res.log->id_string(b.node));
  }
  std::stringstream bad("not a log\n");
  CHECK_THROWS(read_event_log(bad));
}

TEST_CASE("particle records are consistent with the tree") {
  const auto p = params(2.0, 1.5, 0.5, {0.2, 0.0, 0.5, 0.3});
  const auto res = simulate(p, point_configuration(Site{}, 3), DisasterField(9, 0.3, 1), logged(4.0), 10);
  const auto& log = *res.log;
  const auto recs = particle_records(log);
  REQUIRE(recs.size() > 5);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(recs[i].end_time >= recs[i].birth_time);
    const auto& info = log.nodes[i];
    if (info.parent == kNoNode) continue;
    const auto& parent = recs[info.parent];
    auto prefix = recs[i].id;
    prefix.pop_back();
    CHECK(prefix == parent.id);
    CHECK(parent.end_cause == EndCause::branch);
    CHECK(parent.end_time == recs[i].birth_time);
    CHECK(parent.path.position_at(recs[i].birth_time) == recs[i].path.start);
  }
  CHECK(log.id_string(0) == "0:");
}

TEST_CASE("population bookkeeping and atomic disasters") {
  const auto p = params(1.0, 1.0, 1.5, {0.25, 0.0, 0.5, 0.25});
  DisasterAudit audit;
  SimOptions o = logged(6.0);
  o.observer = &audit;
  const auto res = simulate(p, block_configuration(1, 2, 3), DisasterField(11, 1.5, 1), o, 12);
  CHECK(audit.violations == 0);
  CHECK(audit.kills > 0);
  std::int64_t alive = 15;
  const auto& ev = res.log->events;
  for (std::size_t i = 0; i < ev.size(); ++i) {
    switch (ev[i].kind) {
      case EventKind::disaster: {
        std::int64_t k = 0;
        while (i + 1 + k < ev.size() && ev[i + 1 + k].kind == EventKind::kill) ++k;
        CHECK(k == ev[i].count);
        alive -= k;
        break;
      }
      case EventKind::branch: alive += ev[i].count - 1; break;
      case EventKind::exit: --alive; break;
      default: break;
    }
  }
  CHECK(alive == static_cast<std::int64_t>(res.final_alive));
}

TEST_CASE("truncation is dominated by the free process") {
  const auto p = params(2.0, 1.0, 0.5, {0.1, 0.0, 0.9});
  const DisasterField f(13, 0.5, 1);
  std::vector<double> grid;
  for (int i = 1; i <= 20; ++i) grid.push_back(0.25 * i);
  for (std::uint64_t s = 0; s < 50; ++s) {
    SimOptions free_opt{.horizon = 5.0};
    free_opt.count_times = grid;
    SimOptions trunc = free_opt;
    trunc.truncation = Region::cube(1, 3);
    const auto a = simulate(p, point_configuration(Site{}), f, free_opt, s);
    const auto b = simulate(p, point_configuration(Site{}), f, trunc, s);
    for (std::size_t i = 0; i < grid.size(); ++i) REQUIRE(b.counts[i] <= a.counts[i]);
  }
  SimOptions bad{.horizon = 1.0};
  bad.truncation = Region::cube(1, 1);
  CHECK_THROWS_AS(simulate(p, point_configuration(make_site({5})), f, bad, 1), std::invalid_argument);
}

TEST_CASE("raising lambda never lowers the population") {
  const auto lo = params(1.5, 0.5, 1.0, {0.0, 0.3, 0.4, 0.3});
  auto hi = lo;
  hi.lambda = 1.2;
  const DisasterField f(14, 1.0, 1);
  for (std::uint64_t s = 0; s < 60; ++s) {
    SimOptions o{.horizon = 4.0};
    o.branch_rate_bound = 1.2;
    o.snapshot_times = {1.0, 2.0, 3.0, 3.99};
    const auto a = simulate(lo, point_configuration(Site{}), f, o, s);
    const auto b = simulate(hi, point_configuration(Site{}), f, o, s);
    for (std::size_t i = 0; i < o.snapshot_times.size(); ++i)
      REQUIRE(dominates(b.snapshots[i], site_counts(a.snapshots[i])));
  }
}

TEST_CASE("caps flag the run") {
  const auto p = params(1.0, 3.0, 0.0, {0, 0, 1});
  SimOptions o{.horizon = 20.0};
  o.caps.max_alive = 100;
  const auto res = simulate(p, point_configuration(Site{}), DisasterField(1, 0.0, 1), o, 1);
  CHECK(res.capped);
  CHECK(res.end_time < 20.0);
  o.caps = Caps{};
  o.caps.max_events = 10;
  CHECK(simulate(p, point_configuration(Site{}), DisasterField(1, 0.0, 1), o, 1).capped);
}

TEST_CASE("errors") {
  const auto p = params(1.0, 1.0, 1.0, {0, 0, 1});
  CHECK_THROWS_AS(simulate(p, point_configuration(Site{}), DisasterField(1, 1.0, 2), SimOptions{.horizon = 1.0}, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      simulate(p, point_configuration(Site{}), DisasterField(1, 1.0, 1), SimOptions{.start_time = 2.0, .horizon = 1.0}, 1),
      std::invalid_argument);
}

TEST_CASE("delayed start uses the environment after the start time") {
  const DisasterField f(15, 1.0, 1);
  const auto p = params(0.0, 0.0, 1.0, {0, 0, 1});
  const auto first = *first_disaster_after(f, Site{}, 5.0, 1e9);
  SimOptions o = logged(first + 1.0);
  o.start_time = 5.0;
  const auto res = simulate(p, point_configuration(Site{}), f, o, 1);
  const auto recs = particle_records(*res.log);
  CHECK(recs[0].birth_time == 5.0);
  CHECK(recs[0].end_cause == EndCause::disaster);
  CHECK(recs[0].end_time == first);
}

TEST_CASE("survival frequency") {
  const auto dead = params(1.0, 1.0, 1.0, {1.0});
  CHECK(survival_frequency(dead, 50.0, 500, 1).estimate.value < 0.01);

  const auto walker = params(1.0, 0.0, 1.0, {0, 0, 1});
  const auto s = survival_frequency(walker, 1.0, 20000, 2);
  CHECK(std::abs(s.estimate.value - std::exp(-1.0)) <= 3.0 * s.estimate.std_err);

  const auto p = params(2.0, 1.0, 1.0, {0.2, 0.0, 0.8});
  std::size_t prev = 1000;
  for (double h : {0.5, 1.0, 2.0, 4.0}) {
    const auto f = survival_frequency(p, h, 1000, 3);
    CHECK(f.survived <= prev);
    prev = f.survived;
  }
  ReplicaOptions ro;
  ro.threads = 3;
  CHECK(survival_frequency(p, 2.0, 300, 4, ro).survived == survival_frequency(p, 2.0, 300, 4).survived);
}

TEST_CASE("moment identity") {
  const auto p = params(1.0, 1.0, 1.0, {0.5, 0.0, 0.5});
  const auto zero = moment_identity_check(p, DisasterField(1, 1.0, 1), 0.0, 10, 10, 1);
  CHECK(zero.lhs == 1.0);
  CHECK(zero.rhs == 1.0);

  const auto q = params(1.0, 1.0, 0.0, {0.25, 0.0, 0.75});
  const auto free = moment_identity_check(q, DisasterField(2, 0.0, 1), 1.0, 20000, 10, 2);
  CHECK(free.rhs == doctest::Approx(std::exp(0.5)));
  CHECK(free.rhs_se == 0.0);
  CHECK(std::abs(free.lhs - free.rhs) <= 3.0 * free.lhs_se);

  const auto generic = moment_identity_check(p, DisasterField(3, 1.0, 1), 2.0, 5000, 20000, 3);
  CHECK(std::abs(generic.z) <= 3.0);
}

TEST_CASE("growth rate") {
  const auto yule = params(0.0, 1.0, 0.0, {0, 0, 1});
  const auto g = growth_rate(yule, 8.0, 100, 1);
  REQUIRE(g.has_value());
  CHECK(std::abs(g->slope - 1.0) < 0.05);
  CHECK(g->n_survivors == 100);

  const auto dead = params(1.0, 1.0, 1.0, {1.0});
  CHECK_FALSE(growth_rate(dead, 20.0, 50, 2).has_value());
}

TEST_CASE("surviving populations grow large") {
  const auto p = params(8.0, 1.5, 1.0, {0.5, 0.0, 0.0, 0.0, 0.5});
  const std::int64_t k = 20;
  std::vector<double> frac;
  for (double h : {10.0, 20.0, 40.0}) {
    std::size_t survivors = 0, small = 0;
    for (std::uint64_t r = 0; r < 400; ++r) {
      SimOptions o{.horizon = h};
      o.caps.max_alive = 500;
      DisasterCache cache(DisasterField(derive_seed(99, "field", r), 1.0, 1));
      const auto res = simulate(p, point_configuration(Site{}), cache, o, derive_seed(99, "tree", r));
      if (res.capped || res.final_alive > 0) {
        ++survivors;
        if (!res.capped && static_cast<std::int64_t>(res.final_alive) < k) ++small;
      }
    }
    REQUIRE(survivors > 10);
    frac.push_back(static_cast<double>(small) / static_cast<double>(survivors));
  }
  CHECK(frac[1] <= frac[0]);
  CHECK(frac[2] <= frac[1]);
  CHECK(frac[2] < frac[0]);
}

TEST_CASE("survival counts are monotone in lambda under a shared rate bound") {
  BrwParams p;
  p.kappa = 2.0;
  p.alpha = 1.0;
  // Without childless branchings a larger lambda only adds particles.
  p.offspring = {0, 0.5, 0.5};
  ReplicaOptions ro;
  ro.branch_rate_bound = 4.0;
  ro.caps.max_alive = 2000;
  std::size_t prev = 0;
  for (double lambda : {0.0, 0.5, 1.0, 2.0}) {
    p.lambda = lambda;
    const auto f = survival_frequency(p, 5.0, 300, 17, ro);
    CHECK(f.survived >= prev);
    prev = f.survived;
  }
  CHECK(prev > 0);
}
