#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "brwd/brw.hpp"

namespace brwd {

/// Space-time window searched for a fully occupied copy of D_n: times in
/// [t_lo, t_hi], first coordinate in [x1_lo, x1_hi], the others in
/// [-perp, perp].
struct CopyTarget {
  double t_lo = 0.0;
  double t_hi = 0.0;
  std::int32_t x1_lo = 0;
  std::int32_t x1_hi = 0;
  std::int32_t perp = 0;

  bool contains_site(const Site& x, int dim) const;
};

struct CopyHit {
  double time = 0.0;
  Site x{};
};

/// Window of lattice point (k, l): [5Tk, 5T(k+1)] x L(-2k+4l-1 .. -2k+4l+1)
/// x {-L..L}^(d-1).
CopyTarget lattice_box(int k, int l, int L, double T);

/// Earliest (t, x) in the window at which every site of x + D_n holds at least
/// `threshold` particles, found by rescanning the whole window after every
/// event of the log. Slow; used as the reference for the live detector.
std::optional<CopyHit> detect_occupied_copy(const EventLog& log, const CopyTarget& target, int n,
                                            std::int64_t threshold);

struct CopySearch {
  std::vector<std::optional<CopyHit>> hits;  ///< one per target
  bool capped = false;
  double end_time = 0.0;
};

/// Runs the process and reports the earliest copy in each target. Only sites
/// near each event are re-examined. The run stops once every target is hit.
CopySearch detect_occupied_copies(const BrwParams& params, const Configuration& eta, DisasterCache& cache,
                                  const SimOptions& opt, std::uint64_t seed, const std::vector<CopyTarget>& targets,
                                  int n, std::int64_t threshold);

/// Rows 0..K of the oriented lattice; row k holds points l = 0..k.
struct PercLattice {
  int K = 0;
  std::vector<std::vector<char>> occupied;
  std::vector<std::vector<char>> open;
  /// Points with an open predecessor (always true at the origin).
  std::vector<std::vector<char>> attempted;
  std::vector<char> row_capped;
  std::vector<std::vector<std::optional<CopyHit>>> hits;

  explicit PercLattice(int rows = 0);
  bool reaches_row(int k) const;
};

/// Open points: the origin, plus every occupied point with an open
/// predecessor (k-1, l) or (k-1, l-1). Also fills `attempted`.
void open_closure(PercLattice& lat);

enum class PercConstruction {
  global,     ///< boxes searched in the single process started from (D_n, S^2)
  truncated,  ///< each point grown afresh from its predecessor's copy inside a local region
};

struct PercOptions {
  int L = 2;
  double T = 1.0;
  int n = 0;
  int S = 1;
  int K = 4;
  PercConstruction construction = PercConstruction::truncated;
  Caps caps;
};

/// Occupancy from the branching process in one environment. In the truncated
/// construction a point (k+1, l) is tried only when a predecessor is open:
/// the copy found for (k, l), or failing that (k, l-1), is restarted with S^2
/// particles per site and must reach the window of (k+1, l) without leaving
/// x + {-5L..5L} x {-3L..3L}^(d-1).
PercLattice build_eta_from_brw(const BrwParams& params, const DisasterField& field, const PercOptions& opt,
                               std::uint64_t seed);

/// Independent site percolation with every point but the origin occupied when
/// its uniform falls below p. The uniforms depend on seed and rep only, so
/// lattices for different p are coupled monotonically.
PercLattice independent_lattice(double p, int K, std::uint64_t seed, std::size_t rep);

struct PercSurvival {
  double p = 0.0;
  SurvivalEstimate estimate;
};

/// Fraction of lattices with an open point in row K, for each p on shared
/// uniforms.
std::vector<PercSurvival> independent_perc(const std::vector<double>& ps, int K, std::size_t n_reps,
                                           std::uint64_t seed, int threads = 1);

struct DependenceProbe {
  int row = 0;
  int distance = 0;
  double correlation = 0.0;
  double std_err = 0.0;  ///< null standard error 1/sqrt(n - 3)
  std::size_t n_pairs = 0;
  double mean_first = 0.0;
  double mean_second = 0.0;
};

/// Correlation of the occupancy bits of (row, l) and (row, l + distance)
/// over replicas in which both points were attempted. Replica r uses
/// l = r mod (row - distance + 1), so each contributes at most one pair.
DependenceProbe dependence_range_probe(const std::function<PercLattice(std::size_t)>& lattice, int row,
                                       int distance, std::size_t n_reps, int threads = 1);

/// Replica r: fresh environment and tree seed, then build_eta_from_brw.
PercLattice brw_lattice_replica(const BrwParams& params, const PercOptions& opt, std::uint64_t seed,
                                std::size_t rep);

/// Fraction of BRW lattices reaching row K.
SurvivalEstimate brw_perc_survival(const BrwParams& params, const PercOptions& opt, std::size_t n_reps,
                                   std::uint64_t seed, int threads = 1);

/// "k,l,occupied,open" per point after a header line.
void write_lattice(std::ostream& os, const PercLattice& lat);

}  // namespace brwd
