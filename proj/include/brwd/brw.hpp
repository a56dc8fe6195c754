#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "brwd/env.hpp"
#include "brwd/lattice.hpp"
#include "brwd/walk.hpp"

namespace brwd {

/// Offspring laws with support beyond this size are rejected.
inline constexpr std::size_t kMaxOffspringSupport = 64;

struct BrwParams {
  double kappa = 1.0;   ///< jump rate
  double lambda = 1.0;  ///< branching rate
  double alpha = 1.0;   ///< disaster rate
  std::vector<double> offspring{0.0, 0.0, 1.0};  ///< q(0), q(1), ...
  int dim = 1;

  double mean_offspring() const;
  /// lambda (m - 1)
  double growth_exponent() const { return lambda * (mean_offspring() - 1.0); }
  /// Throws std::invalid_argument on negative or non-finite rates, a pmf that
  /// does not sum to 1 within 1e-12, q(1) = 1, or support above the limit.
  void validate() const;
};

enum class EventKind : std::uint8_t { start, jump, branch, birth, disaster, kill, exit };

std::string_view to_string(EventKind k);
std::optional<EventKind> parse_event_kind(std::string_view s);

inline constexpr std::uint64_t kNoNode = ~std::uint64_t{0};

/// One entry of the event log. site is the particle's site after the event
/// (for exit, the first site outside the truncation region). count holds the
/// number of children for branch and the number of victims for disaster.
struct Event {
  double time = 0.0;
  EventKind kind = EventKind::start;
  std::uint64_t node = kNoNode;
  Site site;
  std::int32_t count = 0;
};

/// Tree bookkeeping: roots have parent kNoNode; a child's child_index is
/// 1-based among its siblings.
struct NodeInfo {
  std::uint64_t parent = kNoNode;
  std::uint32_t child_index = 0;
  std::uint32_t root = 0;
};

struct EventLog {
  int dim = 1;
  double start_time = 0.0;
  double horizon = 0.0;
  bool capped = false;
  std::vector<NodeInfo> nodes;
  std::vector<Event> events;

  /// Root index followed by the child indices down to node.
  std::vector<std::uint32_t> particle_id(std::uint64_t node) const;
  /// "root:" for roots, "root:i.j.k" below.
  std::string id_string(std::uint64_t node) const;
};

/// Line format: a header "# brwd-event-log dim=D start=S horizon=H capped=C",
/// then one event per line "time kind id x1 .. xd [count]" where count is
/// present for branch and disaster lines and id is "-" for disasters.
void write_event_log(std::ostream& os, const EventLog& log);
EventLog read_event_log(std::istream& is);

enum class SnapshotFlavor {
  left_limit,   ///< state after all events strictly before t
  right_limit,  ///< state after all events at or before t
};

struct Snapshot {
  double time = 0.0;
  std::vector<std::pair<std::uint64_t, Site>> alive;  ///< (node, site)
};

enum class EndCause : std::uint8_t { branch, disaster, left_region, horizon, cap };

std::string_view to_string(EndCause c);

struct ParticleRecord {
  std::vector<std::uint32_t> id;
  double birth_time = 0.0;
  double end_time = 0.0;
  EndCause end_cause = EndCause::horizon;
  WalkPath path;
};

/// Reconstructs per-particle records from a log.
std::vector<ParticleRecord> particle_records(const EventLog& log);

/// State at time t rebuilt from the log alone. Used as an oracle for the
/// engine's own snapshots.
Snapshot replay_snapshot(const EventLog& log, double t, SnapshotFlavor flavor = SnapshotFlavor::left_limit);

Configuration site_counts(const Snapshot& s);
bool dominates(const Snapshot& s, const Configuration& eta);

struct Caps {
  std::size_t max_alive = 1'000'000;
  std::uint64_t max_events = 100'000'000;
};

/// Read-only view of the running population, handed to observers.
class PopulationView {
 public:
  virtual ~PopulationView() = default;
  virtual std::int64_t count_at(const Site& s) const = 0;
  virtual std::size_t alive() const = 0;
  virtual void for_each_occupied(const std::function<void(const Site&, std::int64_t)>& fn) const = 0;
};

/// Receives every event after the state has been updated.
class SimObserver {
 public:
  virtual ~SimObserver() = default;
  virtual void on_start(double t, const PopulationView& pop) = 0;
  virtual void on_event(const Event& ev, const PopulationView& pop) = 0;
  virtual bool stop_requested() const { return false; }
};

struct SimOptions {
  double start_time = 0.0;
  double horizon = 0.0;
  /// Particles are removed the moment they jump out of this region.
  std::optional<Region> truncation;
  Caps caps;
  bool record_log = false;
  std::vector<double> snapshot_times;
  SnapshotFlavor flavor = SnapshotFlavor::left_limit;
  /// Population sizes (left limits) at these times.
  std::vector<double> count_times;
  bool keep_final = false;
  /// Candidate branching rate; births are thinned to lambda. Running two
  /// values of lambda with the same bound couples them monotonically.
  double branch_rate_bound = 0.0;
  SimObserver* observer = nullptr;
};

struct SimResult {
  std::optional<EventLog> log;
  std::vector<Snapshot> snapshots;
  /// One entry per count time; -1 if the run stopped early by cap or observer.
  std::vector<std::int64_t> counts;
  /// Site counts at the end of the run (when keep_final).
  Configuration final_counts;
  std::size_t final_alive = 0;
  bool capped = false;
  bool stopped = false;
  std::uint64_t n_events = 0;
  double end_time = 0.0;
};

/// Event-driven simulation from configuration eta0 placed at start_time.
/// The state at the horizon is the left limit: events at exactly the horizon
/// are not applied.
SimResult simulate(const BrwParams& params, const Configuration& eta0, DisasterCache& cache, const SimOptions& opt,
                   std::uint64_t seed);
SimResult simulate(const BrwParams& params, const Configuration& eta0, const DisasterField& field,
                   const SimOptions& opt, std::uint64_t seed);

struct ReplicaOptions {
  Caps caps;
  int threads = 1;
  /// Forwarded to SimOptions::branch_rate_bound.
  double branch_rate_bound = 0.0;
};

struct SurvivalFrequency {
  /// Capped replicas count as surviving.
  SurvivalEstimate estimate;
  std::size_t n_reps = 0;
  std::size_t survived = 0;
  std::size_t capped = 0;
};

/// Fraction of (fresh field, tree) replicas started from one particle at the
/// origin that are alive at the horizon.
SurvivalFrequency survival_frequency(const BrwParams& params, double horizon, std::size_t n_reps,
                                     std::uint64_t seed, const ReplicaOptions& ro = {});

struct MomentCheck {
  double lhs = 0.0;  ///< mean |Z(t)|
  double lhs_se = 0.0;
  double rhs = 0.0;  ///< exp(lambda (m-1) t) S_hat(t)
  double rhs_se = 0.0;
  double z = 0.0;
  std::size_t capped = 0;
};

/// Both sides are estimated in the same field: n_reps trees for the left,
/// n_walkers walkers for the right.
MomentCheck moment_identity_check(const BrwParams& params, const DisasterField& field, double t,
                                  std::size_t n_reps, std::size_t n_walkers, std::uint64_t seed,
                                  const ReplicaOptions& ro = {});

struct GrowthOptions {
  ReplicaOptions replicas;
  /// The fit uses log |Z(t)| on a grid over [window_start * horizon, horizon].
  double window_start = 0.5;
  int grid_points = 21;
};

struct GrowthEstimate {
  double slope = 0.0;
  double std_err = 0.0;
  std::size_t n_survivors = 0;
  std::size_t n_capped = 0;
  std::size_t n_reps = 0;
};

/// Mean least-squares slope of log |Z(t)| among surviving replicas; none when
/// nothing survives. Capped replicas contribute the grid points reached before
/// the cap when there are at least three.
std::optional<GrowthEstimate> growth_rate(const BrwParams& params, double horizon, std::size_t n_reps,
                                          std::uint64_t seed, const GrowthOptions& go = {});

}  // namespace brwd
