#include "brwd/brw.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "brwd/parallel.hpp"
#include "brwd/stats.hpp"

namespace brwd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool finite_nonneg(double v) { return v >= 0.0 && std::isfinite(v); }

}  // namespace

double BrwParams::mean_offspring() const {
  double m = 0.0;
  for (std::size_t k = 0; k < offspring.size(); ++k) m += static_cast<double>(k) * offspring[k];
  return m;
}

void BrwParams::validate() const {
  check_dimension(dim);
  if (!finite_nonneg(kappa)) throw std::invalid_argument("kappa must be finite and >= 0");
  if (!finite_nonneg(lambda)) throw std::invalid_argument("lambda must be finite and >= 0");
  if (!finite_nonneg(alpha)) throw std::invalid_argument("alpha must be finite and >= 0");
  if (offspring.empty()) throw std::invalid_argument("offspring pmf is empty");
  if (offspring.size() > kMaxOffspringSupport) throw std::invalid_argument("offspring support exceeds 64");
  double sum = 0.0;
  for (double q : offspring) {
    if (!finite_nonneg(q)) throw std::invalid_argument("offspring pmf has a negative entry");
    sum += q;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("offspring pmf must sum to 1");
  if (offspring.size() > 1 && offspring[1] >= 1.0) throw std::invalid_argument("q(1) must be < 1");
}

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::start: return "start";
    case EventKind::jump: return "jump";
    case EventKind::branch: return "branch";
    case EventKind::birth: return "birth";
    case EventKind::disaster: return "disaster";
    case EventKind::kill: return "kill";
    case EventKind::exit: return "exit";
  }
  return "?";
}

std::optional<EventKind> parse_event_kind(std::string_view s) {
  for (auto k : {EventKind::start, EventKind::jump, EventKind::branch, EventKind::birth, EventKind::disaster,
                 EventKind::kill, EventKind::exit}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

std::string_view to_string(EndCause c) {
  switch (c) {
    case EndCause::branch: return "branch";
    case EndCause::disaster: return "disaster";
    case EndCause::left_region: return "left-region";
    case EndCause::horizon: return "horizon";
    case EndCause::cap: return "cap";
  }
  return "?";
}

std::vector<std::uint32_t> EventLog::particle_id(std::uint64_t node) const {
  std::vector<std::uint32_t> path;
  while (nodes.at(node).parent != kNoNode) {
    path.push_back(nodes[node].child_index);
    node = nodes[node].parent;
  }
  path.push_back(nodes[node].root);
  std::reverse(path.begin(), path.end());
  return path;
}

std::string EventLog::id_string(std::uint64_t node) const {
  const auto id = particle_id(node);
  std::string s = std::to_string(id[0]) + ":";
  for (std::size_t i = 1; i < id.size(); ++i) {
    if (i > 1) s += '.';
    s += std::to_string(id[i]);
  }
  return s;
}

namespace {

std::string format_time(double t) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", t);
  return buf;
}

}  // namespace

void write_event_log(std::ostream& os, const EventLog& log) {
  os << "# brwd-event-log dim=" << log.dim << " start=" << format_time(log.start_time)
     << " horizon=" << format_time(log.horizon) << " capped=" << (log.capped ? 1 : 0) << '\n';
  for (const auto& e : log.events) {
    os << format_time(e.time) << ' ' << to_string(e.kind) << ' '
       << (e.node == kNoNode ? std::string("-") : log.id_string(e.node)) << ' ' << format_site(e.site, log.dim);
    if (e.kind == EventKind::branch || e.kind == EventKind::disaster) os << ' ' << e.count;
    os << '\n';
  }
}

EventLog read_event_log(std::istream& is) {
  EventLog log;
  std::string line;
  if (!std::getline(is, line) || line.rfind("# brwd-event-log", 0) != 0)
    throw std::runtime_error("event log: missing header");
  {
    std::istringstream hs(line.substr(16));
    std::string tok;
    while (hs >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
      if (key == "dim") log.dim = std::stoi(val);
      else if (key == "start") log.start_time = std::stod(val);
      else if (key == "horizon") log.horizon = std::stod(val);
      else if (key == "capped") log.capped = val == "1";
    }
  }
  check_dimension(log.dim);
  std::unordered_map<std::string, std::uint64_t> ids;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string time_s, kind_s, id_s;
    if (!(ls >> time_s >> kind_s >> id_s)) throw std::runtime_error("event log: short line " + std::to_string(lineno));
    Event e;
    e.time = std::stod(time_s);
    const auto kind = parse_event_kind(kind_s);
    if (!kind) throw std::runtime_error("event log: unknown kind on line " + std::to_string(lineno));
    e.kind = *kind;
    for (int i = 0; i < log.dim; ++i) {
      if (!(ls >> e.site[i])) throw std::runtime_error("event log: bad site on line " + std::to_string(lineno));
    }
    if (e.kind == EventKind::branch || e.kind == EventKind::disaster) ls >> e.count;
    if (id_s != "-") {
      auto it = ids.find(id_s);
      if (it == ids.end()) {
        NodeInfo info;
        const auto colon = id_s.find(':');
        if (colon == std::string::npos) throw std::runtime_error("event log: bad id on line " + std::to_string(lineno));
        info.root = static_cast<std::uint32_t>(std::stoul(id_s.substr(0, colon)));
        const std::string path = id_s.substr(colon + 1);
        if (!path.empty()) {
          const auto dot = path.rfind('.');
          const std::string parent =
              id_s.substr(0, colon + 1) + (dot == std::string::npos ? std::string() : path.substr(0, dot));
          const auto pit = ids.find(parent);
          if (pit == ids.end()) throw std::runtime_error("event log: unknown parent on line " + std::to_string(lineno));
          info.parent = pit->second;
          info.child_index = static_cast<std::uint32_t>(std::stoul(dot == std::string::npos ? path : path.substr(dot + 1)));
        }
        it = ids.emplace(id_s, log.nodes.size()).first;
        log.nodes.push_back(info);
      }
      e.node = it->second;
    }
    log.events.push_back(e);
  }
  return log;
}

std::vector<ParticleRecord> particle_records(const EventLog& log) {
  std::vector<ParticleRecord> recs(log.nodes.size());
  std::vector<char> open(log.nodes.size(), 0);
  for (const auto& e : log.events) {
    if (e.node == kNoNode) continue;
    auto& r = recs[e.node];
    switch (e.kind) {
      case EventKind::start:
      case EventKind::birth:
        r.id = log.particle_id(e.node);
        r.birth_time = e.time;
        r.path.dim = log.dim;
        r.path.start = e.site;
        open[e.node] = 1;
        break;
      case EventKind::jump:
        r.path.jumps.push_back({e.time, e.site});
        break;
      case EventKind::exit:
        r.path.jumps.push_back({e.time, e.site});
        r.end_time = e.time;
        r.end_cause = EndCause::left_region;
        open[e.node] = 0;
        break;
      case EventKind::branch:
        r.end_time = e.time;
        r.end_cause = EndCause::branch;
        open[e.node] = 0;
        break;
      case EventKind::kill:
        r.end_time = e.time;
        r.end_cause = EndCause::disaster;
        open[e.node] = 0;
        break;
      case EventKind::disaster:
        break;
    }
  }
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (open[i]) {
      recs[i].end_time = log.horizon;
      recs[i].end_cause = log.capped ? EndCause::cap : EndCause::horizon;
    }
    recs[i].path.horizon = recs[i].end_time;
  }
  return recs;
}

Snapshot replay_snapshot(const EventLog& log, double t, SnapshotFlavor flavor) {
  std::vector<std::optional<Site>> where(log.nodes.size());
  for (const auto& e : log.events) {
    // The initial configuration is part of the state at the start time itself.
    const bool applies =
        e.kind == EventKind::start || (flavor == SnapshotFlavor::left_limit ? e.time < t : e.time <= t);
    if (!applies) break;
    if (e.node == kNoNode) continue;
    switch (e.kind) {
      case EventKind::start:
      case EventKind::birth:
      case EventKind::jump:
        where[e.node] = e.site;
        break;
      case EventKind::branch:
      case EventKind::kill:
      case EventKind::exit:
        where[e.node].reset();
        break;
      case EventKind::disaster:
        break;
    }
  }
  Snapshot s;
  s.time = t;
  for (std::size_t i = 0; i < where.size(); ++i) {
    if (where[i]) s.alive.emplace_back(i, *where[i]);
  }
  return s;
}

Configuration site_counts(const Snapshot& s) {
  Configuration c;
  for (const auto& [node, site] : s.alive) ++c[site];
  return c;
}

bool dominates(const Snapshot& s, const Configuration& eta) {
  const auto have = site_counts(s);
  for (const auto& [site, need] : eta) {
    if (need <= 0) continue;
    const auto it = have.find(site);
    if (it == have.end() || it->second < need) return false;
  }
  return true;
}

namespace {

enum Rank : std::uint8_t { kDisaster = 0, kBranch = 1, kJump = 2 };

struct QueueItem {
  double time;
  std::uint8_t rank;
  std::uint64_t seq;
  std::uint32_t slot;    // particle events
  std::uint32_t stamp;   // particle events
  std::uint64_t epoch;   // disaster events
  Site site;             // disaster events

  bool operator>(const QueueItem& o) const {
    if (time != o.time) return time > o.time;
    if (rank != o.rank) return rank > o.rank;
    return seq > o.seq;
  }
};

struct Particle {
  Site site;
  std::uint64_t node = kNoNode;
  std::uint64_t lineage = 0;
  std::uint64_t candidates = 0;  // branch candidates consumed by this lineage
  CounterStream jump_rng;
  CounterStream branch_rng;
  double next_jump = kInf;
  double next_branch = kInf;
  std::int32_t prev = -1;
  std::int32_t next = -1;
  std::uint32_t stamp = 0;
  bool alive = false;
};

struct Cell {
  std::int64_t count = 0;
  std::int32_t head = -1;
  std::uint64_t epoch = 0;
};

class Engine final : public PopulationView {
 public:
  Engine(const BrwParams& p, DisasterCache& cache, const SimOptions& opt, std::uint64_t seed)
      : p_(p), cache_(cache), opt_(opt), seed_(seed) {
    p_.validate();
    if (cache.field().dimension() != p.dim) throw std::invalid_argument("simulate: field dimension mismatch");
    if (!(opt.horizon >= opt.start_time)) throw std::invalid_argument("simulate: horizon before start time");
    if (opt.truncation && opt.truncation->dim != p.dim)
      throw std::invalid_argument("simulate: truncation region dimension mismatch");
    lambda_max_ = std::max(p.lambda, opt.branch_rate_bound);
    accept_ = lambda_max_ > 0.0 ? p.lambda / lambda_max_ : 0.0;
    double cum = 0.0;
    for (double q : p.offspring) {
      cum += q;
      cdf_.push_back(cum);
    }
    cdf_.back() = 1.0;
    dirs_ = static_cast<std::uint32_t>(2 * p.dim);
  }

  std::int64_t count_at(const Site& s) const override {
    const auto it = cells_.find(s);
    return it == cells_.end() ? 0 : it->second.count;
  }
  std::size_t alive() const override { return alive_; }
  void for_each_occupied(const std::function<void(const Site&, std::int64_t)>& fn) const override {
    // Sorted so that observers see a deterministic order.
    std::vector<std::pair<Site, std::int64_t>> v;
    v.reserve(cells_.size());
    for (const auto& [s, c] : cells_) v.emplace_back(s, c.count);
    std::sort(v.begin(), v.end());
    for (const auto& [s, c] : v) fn(s, c);
  }

  SimResult run(const Configuration& eta0) {
    SimResult res;
    logging_ = opt_.record_log;
    emitting_ = logging_ || opt_.observer;
    if (logging_) {
      log_.dim = p_.dim;
      log_.start_time = opt_.start_time;
      log_.horizon = opt_.horizon;
    }
    const double t0 = opt_.start_time;
    std::uint32_t root = 0;
    for (const auto& [site, count] : eta0) {
      if (count < 0) throw std::invalid_argument("simulate: negative count in configuration");
      if (opt_.truncation && !opt_.truncation->contains(site))
        throw std::invalid_argument("simulate: start configuration outside truncation region");
      for (std::int64_t r = 0; r < count; ++r) {
        const std::uint64_t node = new_node(kNoNode, 0, root);
        const std::uint32_t slot = spawn(site, node, derive_seed(seed_, hash_tag("root"), root), t0);
        ++root;
        emit({t0, EventKind::start, node, site, 0}, false);
        (void)slot;
      }
    }
    if (opt_.observer) opt_.observer->on_start(t0, *this);

    std::vector<double> snap_times = opt_.snapshot_times;
    std::sort(snap_times.begin(), snap_times.end());
    std::size_t next_snap = 0;
    // count_times may be unsorted; visit them in order but store by index.
    std::vector<std::size_t> count_order(opt_.count_times.size());
    for (std::size_t i = 0; i < count_order.size(); ++i) count_order[i] = i;
    std::sort(count_order.begin(), count_order.end(),
              [&](std::size_t a, std::size_t b) { return opt_.count_times[a] < opt_.count_times[b]; });
    res.counts.assign(opt_.count_times.size(), -1);
    std::size_t next_count = 0;

    auto flush_until = [&](double t, bool inclusive) {
      // Left limits at times <= t (inclusive) or < t are taken before an event at t.
      while (next_count < count_order.size()) {
        const double ct = opt_.count_times[count_order[next_count]];
        if (inclusive ? ct <= t : ct < t) {
          res.counts[count_order[next_count]] = static_cast<std::int64_t>(alive_);
          ++next_count;
        } else {
          break;
        }
      }
      const bool right = opt_.flavor == SnapshotFlavor::right_limit;
      while (next_snap < snap_times.size()) {
        const double st = snap_times[next_snap];
        const bool take = right ? st < t : (inclusive ? st <= t : st < t);
        if (!take) break;
        res.snapshots.push_back(snapshot(st));
        ++next_snap;
      }
    };

    bool stopped = false;
    while (!queue_.empty()) {
      const QueueItem item = queue_.top();
      if (item.time >= opt_.horizon) break;
      flush_until(item.time, true);
      queue_.pop();
      if (!process(item)) continue;
      ++res.n_events;
      if (alive_ > opt_.caps.max_alive || res.n_events >= opt_.caps.max_events) {
        res.capped = true;
        end_time_ = item.time;
        break;
      }
      if (opt_.observer && opt_.observer->stop_requested()) {
        stopped = true;
        end_time_ = item.time;
        break;
      }
    }
    if (!res.capped && !stopped) {
      end_time_ = opt_.horizon;
      // Remaining requested times see the frozen final state.
      flush_until(opt_.horizon, true);
      while (next_snap < snap_times.size()) {
        res.snapshots.push_back(snapshot(snap_times[next_snap]));
        ++next_snap;
      }
    }
    res.stopped = stopped;
    res.final_alive = alive_;
    res.end_time = end_time_;
    if (opt_.keep_final) {
      for (const auto& [s, c] : cells_) res.final_counts[s] = c.count;
    }
    if (logging_) {
      log_.capped = res.capped;
      res.log = std::move(log_);
    }
    return res;
  }

 private:
  std::uint64_t new_node(std::uint64_t parent, std::uint32_t child_index, std::uint32_t root) {
    if (logging_) log_.nodes.push_back({parent, child_index, root});
    return next_node_++;
  }

  void emit(const Event& e, bool notify = true) {
    if (logging_) log_.events.push_back(e);
    if (notify && opt_.observer) opt_.observer->on_event(e, *this);
  }

  Snapshot snapshot(double t) const {
    Snapshot s;
    s.time = t;
    for (const auto& pt : slots_) {
      if (pt.alive) s.alive.emplace_back(pt.node, pt.site);
    }
    std::sort(s.alive.begin(), s.alive.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return s;
  }

  void schedule_particle(std::uint32_t slot) {
    Particle& pt = slots_[slot];
    ++pt.stamp;
    const bool branch = pt.next_branch <= pt.next_jump;
    const double t = branch ? pt.next_branch : pt.next_jump;
    if (t == kInf) return;
    queue_.push({t, branch ? kBranch : kJump, seq_++, slot, pt.stamp, 0, Site{}});
  }

  void attach(std::uint32_t slot, double t) {
    Particle& pt = slots_[slot];
    auto [it, inserted] = cells_.try_emplace(pt.site);
    Cell& c = it->second;
    if (inserted) {
      c.epoch = ++epoch_;
      const double d = cache_.first_at_or_after(pt.site, t);
      if (d < kInf) queue_.push({d, kDisaster, seq_++, 0, 0, c.epoch, pt.site});
    }
    pt.prev = -1;
    pt.next = c.head;
    if (c.head >= 0) slots_[static_cast<std::size_t>(c.head)].prev = static_cast<std::int32_t>(slot);
    c.head = static_cast<std::int32_t>(slot);
    ++c.count;
  }

  void detach(std::uint32_t slot) {
    Particle& pt = slots_[slot];
    auto it = cells_.find(pt.site);
    Cell& c = it->second;
    if (pt.prev >= 0) slots_[static_cast<std::size_t>(pt.prev)].next = pt.next;
    else c.head = pt.next;
    if (pt.next >= 0) slots_[static_cast<std::size_t>(pt.next)].prev = pt.prev;
    if (--c.count == 0) cells_.erase(it);
  }

  std::uint32_t spawn(const Site& site, std::uint64_t node, std::uint64_t lineage, double t) {
    std::uint32_t slot;
    if (!free_.empty()) {
      slot = free_.back();
      free_.pop_back();
    } else {
      slot = static_cast<std::uint32_t>(slots_.size());
      slots_.emplace_back();
    }
    Particle& pt = slots_[slot];
    pt.site = site;
    pt.node = node;
    pt.lineage = lineage;
    pt.candidates = 0;
    pt.jump_rng = CounterStream(mix64(lineage ^ 0x6a75u));
    pt.branch_rng = CounterStream(mix64(lineage ^ 0x6272u));
    pt.next_jump = t + exponential(pt.jump_rng, p_.kappa);
    pt.next_branch = t + exponential(pt.branch_rng, lambda_max_);
    pt.alive = true;
    ++alive_;
    attach(slot, t);
    schedule_particle(slot);
    return slot;
  }

  void retire(std::uint32_t slot) {
    Particle& pt = slots_[slot];
    detach(slot);
    pt.alive = false;
    ++pt.stamp;
    --alive_;
    free_.push_back(slot);
  }

  bool process(const QueueItem& item) {
    if (item.rank == kDisaster) return disaster(item);
    Particle& pt = slots_[item.slot];
    if (!pt.alive || pt.stamp != item.stamp) return false;
    if (item.rank == kBranch) branch_candidate(item.slot, item.time);
    else jump(item.slot, item.time);
    return true;
  }

  bool disaster(const QueueItem& item) {
    auto it = cells_.find(item.site);
    if (it == cells_.end() || it->second.epoch != item.epoch) return false;
    const std::int64_t victims = it->second.count;
    std::vector<std::uint32_t> dead;
    dead.reserve(static_cast<std::size_t>(victims));
    for (std::int32_t s = it->second.head; s >= 0; s = slots_[static_cast<std::size_t>(s)].next)
      dead.push_back(static_cast<std::uint32_t>(s));
    // Kill in node order so the log does not depend on list order.
    std::sort(dead.begin(), dead.end(),
              [&](std::uint32_t a, std::uint32_t b) { return slots_[a].node < slots_[b].node; });
    std::vector<std::uint64_t> nodes;
    for (auto s : dead) nodes.push_back(slots_[s].node);
    for (auto s : dead) retire(s);
    if (emitting_) {
      emit({item.time, EventKind::disaster, kNoNode, item.site, static_cast<std::int32_t>(victims)}, false);
      for (std::size_t i = 0; i < nodes.size(); ++i)
        emit({item.time, EventKind::kill, nodes[i], item.site, 0}, i + 1 == nodes.size());
    }
    return true;
  }

  void jump(std::uint32_t slot, double t) {
    Particle& pt = slots_[slot];
    const int dir = static_cast<int>(uniform_index(pt.jump_rng, dirs_));
    pt.next_jump = t + exponential(pt.jump_rng, p_.kappa);
    const Site dest = neighbor(pt.site, dir);
    detach(slot);
    pt.site = dest;
    if (opt_.truncation && !opt_.truncation->contains(dest)) {
      const std::uint64_t node = pt.node;
      pt.alive = false;
      ++pt.stamp;
      --alive_;
      free_.push_back(slot);
      if (emitting_) emit({t, EventKind::exit, node, dest, 0});
      return;
    }
    attach(slot, t);
    schedule_particle(slot);
    if (emitting_) emit({t, EventKind::jump, pt.node, dest, 0});
  }

  void branch_candidate(std::uint32_t slot, double t) {
    Particle& pt = slots_[slot];
    const double u = uniform01(pt.branch_rng);
    const auto k = static_cast<std::uint32_t>(sample_cdf(pt.branch_rng, cdf_));
    const std::uint64_t ordinal = pt.candidates++;
    pt.next_branch = t + exponential(pt.branch_rng, lambda_max_);
    if (!(u < accept_)) {
      schedule_particle(slot);
      return;
    }
    const std::uint64_t parent = pt.node;
    const Site site = pt.site;
    const std::uint64_t lineage = pt.lineage;
    const std::uint32_t root = logging_ ? log_.nodes[parent].root : 0;
    if (k == 0) {
      retire(slot);
      if (emitting_) emit({t, EventKind::branch, parent, site, 0});
      return;
    }
    // The first child continues the parent's streams; the others open new lineages.
    pt.node = new_node(parent, 1, root);
    schedule_particle(slot);
    std::vector<std::uint64_t> children{pt.node};
    for (std::uint32_t j = 2; j <= k; ++j) {
      const std::uint64_t node = new_node(parent, j, root);
      spawn(site, node, derive_seed(lineage, ordinal, j), t);
      children.push_back(node);
    }
    if (emitting_) {
      emit({t, EventKind::branch, parent, site, static_cast<std::int32_t>(k)}, false);
      for (std::size_t i = 0; i < children.size(); ++i)
        emit({t, EventKind::birth, children[i], site, 0}, i + 1 == children.size());
    }
  }

  BrwParams p_;
  DisasterCache& cache_;
  const SimOptions& opt_;
  std::uint64_t seed_;
  double lambda_max_ = 0.0;
  double accept_ = 0.0;
  std::vector<double> cdf_;
  std::uint32_t dirs_ = 2;

  std::vector<Particle> slots_;
  std::vector<std::uint32_t> free_;
  std::unordered_map<Site, Cell, SiteHash> cells_;
  std::priority_queue<QueueItem, std::vector<QueueItem>, std::greater<>> queue_;
  std::uint64_t seq_ = 0;
  std::uint64_t epoch_ = 0;
  std::uint64_t next_node_ = 0;
  std::size_t alive_ = 0;
  double end_time_ = 0.0;

  bool logging_ = false;
  bool emitting_ = false;
  EventLog log_;
};

}  // namespace

SimResult simulate(const BrwParams& params, const Configuration& eta0, DisasterCache& cache, const SimOptions& opt,
                   std::uint64_t seed) {
  Engine engine(params, cache, opt, seed);
  return engine.run(eta0);
}

SimResult simulate(const BrwParams& params, const Configuration& eta0, const DisasterField& field,
                   const SimOptions& opt, std::uint64_t seed) {
  DisasterCache cache(field);
  return simulate(params, eta0, cache, opt, seed);
}

SurvivalFrequency survival_frequency(const BrwParams& params, double horizon, std::size_t n_reps,
                                     std::uint64_t seed, const ReplicaOptions& ro) {
  params.validate();
  if (n_reps < 1) throw std::invalid_argument("n_reps must be >= 1");
  struct Outcome {
    bool alive = false;
    bool capped = false;
  };
  const auto out = parallel_map(n_reps, ro.threads, [&](std::size_t r) {
    SimOptions opt;
    opt.horizon = horizon;
    opt.caps = ro.caps;
    opt.branch_rate_bound = ro.branch_rate_bound;
    DisasterCache cache(DisasterField(derive_seed(seed, "field", r), params.alpha, params.dim));
    const auto res = simulate(params, point_configuration(Site{}), cache, opt, derive_seed(seed, "tree", r));
    return Outcome{res.capped || res.final_alive > 0, res.capped};
  });
  SurvivalFrequency f;
  f.n_reps = n_reps;
  for (const auto& o : out) {
    f.survived += o.alive;
    f.capped += o.capped;
  }
  f.estimate.n_samples = n_reps;
  f.estimate.value = static_cast<double>(f.survived) / static_cast<double>(n_reps);
  f.estimate.std_err = binomial_std_error(f.estimate.value, n_reps);
  return f;
}

MomentCheck moment_identity_check(const BrwParams& params, const DisasterField& field, double t,
                                  std::size_t n_reps, std::size_t n_walkers, std::uint64_t seed,
                                  const ReplicaOptions& ro) {
  params.validate();
  if (field.dimension() != params.dim) throw std::invalid_argument("moment_identity_check: dimension mismatch");
  if (n_reps < 1 || n_walkers < 1) throw std::invalid_argument("n_reps and n_walkers must be >= 1");
  MomentCheck mc;
  if (t == 0.0) {
    mc.lhs = mc.rhs = 1.0;
    return mc;
  }
  struct Size {
    double n = 0.0;
    bool capped = false;
  };
  // Trees are grouped in blocks sharing one cache to keep memory per worker bounded.
  const std::size_t block = 64;
  const std::size_t n_blocks = (n_reps + block - 1) / block;
  const auto blocks = parallel_map(n_blocks, ro.threads, [&](std::size_t b) {
    DisasterCache cache(field);
    std::vector<Size> v;
    for (std::size_t r = b * block; r < std::min(n_reps, (b + 1) * block); ++r) {
      SimOptions opt;
      opt.horizon = t;
      opt.caps = ro.caps;
      const auto res = simulate(params, point_configuration(Site{}), cache, opt, derive_seed(seed, "tree", r));
      v.push_back({static_cast<double>(res.final_alive), res.capped});
    }
    return v;
  });
  RunningStats st;
  for (const auto& v : blocks) {
    for (const auto& s : v) {
      st.add(s.n);
      mc.capped += s.capped;
    }
  }
  mc.lhs = st.mean();
  mc.lhs_se = n_reps > 1 ? st.std_error() : 0.0;
  Rng rng(derive_seed(seed, "walkers"));
  const auto s = estimate_survival(field, params.kappa, t, n_walkers, false, rng);
  const double g = std::exp(params.growth_exponent() * t);
  mc.rhs = g * s.value;
  mc.rhs_se = g * s.std_err;
  const double se = std::hypot(mc.lhs_se, mc.rhs_se);
  mc.z = se > 0.0 ? (mc.lhs - mc.rhs) / se : 0.0;
  return mc;
}

std::optional<GrowthEstimate> growth_rate(const BrwParams& params, double horizon, std::size_t n_reps,
                                          std::uint64_t seed, const GrowthOptions& go) {
  params.validate();
  if (!(horizon > 0.0)) throw std::invalid_argument("growth_rate: horizon must be > 0");
  if (go.grid_points < 3) throw std::invalid_argument("growth_rate: need at least 3 grid points");
  if (!(go.window_start >= 0.0 && go.window_start < 1.0)) throw std::invalid_argument("growth_rate: bad window");
  std::vector<double> grid;
  const double a = go.window_start * horizon;
  for (int i = 0; i < go.grid_points; ++i) grid.push_back(a + (horizon - a) * i / (go.grid_points - 1));
  struct Fit {
    bool survivor = false;
    bool capped = false;
    double slope = 0.0;
  };
  const auto fits = parallel_map(n_reps, go.replicas.threads, [&](std::size_t r) {
    SimOptions opt;
    opt.horizon = horizon;
    opt.caps = go.replicas.caps;
    opt.count_times = grid;
    DisasterCache cache(DisasterField(derive_seed(seed, "field", r), params.alpha, params.dim));
    const auto res = simulate(params, point_configuration(Site{}), cache, opt, derive_seed(seed, "tree", r));
    Fit f;
    f.capped = res.capped;
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (res.counts[i] > 0) {
        xs.push_back(grid[i]);
        ys.push_back(std::log(static_cast<double>(res.counts[i])));
      }
    }
    const bool alive_at_end = res.capped || res.final_alive > 0;
    if (alive_at_end && xs.size() >= 3) {
      f.survivor = true;
      f.slope = ols_fit(xs, ys).slope;
    }
    return f;
  });
  GrowthEstimate g;
  g.n_reps = n_reps;
  RunningStats st;
  for (const auto& f : fits) {
    g.n_capped += f.capped;
    if (!f.survivor) continue;
    ++g.n_survivors;
    st.add(f.slope);
  }
  if (g.n_survivors == 0) return std::nullopt;
  g.slope = st.mean();
  g.std_err = g.n_survivors > 1 ? st.std_error() : std::numeric_limits<double>::quiet_NaN();
  return g;
}

}  // namespace brwd
