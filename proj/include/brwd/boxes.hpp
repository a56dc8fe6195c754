#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "brwd/brw.hpp"

namespace brwd {

/// [t0, t0 + T] x (center + {-L, ..., L}^d).
struct SpaceTimeBox {
  int dim = 1;
  int L = 1;
  double T = 1.0;
  double t0 = 0.0;
  Site center{};

  void validate() const;
  /// Sites strictly inside the spatial box.
  Region interior() const;
};

/// Part of the box boundary. Top regions have sign = sign of x_1 and axis 0;
/// face regions sit at x_axis = sign * L. theta holds the signs of the
/// remaining d - 1 coordinates in increasing axis order.
struct ExitRegion {
  enum class Kind : std::uint8_t { top, face };
  Kind kind = Kind::top;
  int axis = 0;
  int sign = 1;
  std::array<int, kMaxDim - 1> theta{1, 1, 1};

  /// Position in ExitCounts::M (top) or ExitCounts::N (face).
  std::size_t index(int dim) const;
  std::string to_string(int dim) const;

  friend bool operator==(const ExitRegion&, const ExitRegion&) = default;
};

ExitRegion top_region(int dim, std::size_t index);
ExitRegion face_region(int dim, std::size_t index);

/// Region containing the boundary point (t, x). The top wins where it meets a
/// face, and among faces the lowest axis wins, so every boundary point gets
/// exactly one region. Throws std::invalid_argument off the boundary.
ExitRegion classify_exit(const SpaceTimeBox& box, double t, const Site& x);

struct ExitCounts {
  int dim = 1;
  std::vector<std::int64_t> M;  ///< 2^d top orthants
  std::vector<std::int64_t> N;  ///< d 2^d face orthants
  bool capped = false;

  explicit ExitCounts(int d = 1);
  std::int64_t sum_M() const;
  std::int64_t sum_N() const;
  void add(const ExitRegion& r);
};

/// First-hit counts from a complete log. A line of descent that touched the
/// boundary no longer counts, so a particle is counted at most once and its
/// later descendants never. The log must start at box.t0 with every particle
/// strictly inside, reach t0 + T and not be capped.
ExitCounts exit_counts(const EventLog& log, const SpaceTimeBox& box);

/// The same counts from a live run killed at the boundary: the simulation is
/// truncated to the box interior and stops at t0 + T. With equal seeds this
/// reproduces exit_counts on the untruncated log exactly.
ExitCounts simulate_exit_counts(const BrwParams& params, const Configuration& eta, DisasterCache& cache,
                                const SpaceTimeBox& box, std::uint64_t seed, const Caps& caps = {});

/// Nonnegative functional of the counts; the FKG test needs it nondecreasing
/// in every coordinate, which is not checked.
using CountFunctional = std::function<double(const ExitCounts&)>;

struct NamedFunctional {
  std::string name;
  CountFunctional fn;
};

/// Indicator thresholds and linear sums over the counts of one box.
std::vector<NamedFunctional> fkg_functional_suite(int dim);

struct FkgEstimate {
  double cov = 0.0;
  /// Influence-function error, floored at the independence value sqrt(Var f Var g / n).
  double std_err = 0.0;
  double mean_f = 0.0;
  double mean_g = 0.0;
  std::size_t n_reps = 0;
  std::size_t capped = 0;
};

/// E[f g] - E[f] E[g] for two independent trees from eta1 and eta2 that share
/// a fresh environment in each replica.
FkgEstimate fkg_test(const BrwParams& params, const Configuration& eta1, const Configuration& eta2,
                     const SpaceTimeBox& box, const CountFunctional& f, const CountFunctional& g,
                     std::size_t n_reps, std::uint64_t seed, const ReplicaOptions& ro = {});

/// fkg_test for every ordered pair (f, g) of the suite, row-major, from one
/// set of replicas. Entry (i, j) equals fkg_test with suite[i], suite[j] and
/// the same seed.
std::vector<FkgEstimate> fkg_suite_test(const BrwParams& params, const Configuration& eta1,
                                        const Configuration& eta2, const SpaceTimeBox& box,
                                        const std::vector<NamedFunctional>& suite, std::size_t n_reps,
                                        std::uint64_t seed, const ReplicaOptions& ro = {});

template <class Scalar>
struct Lemma47Sides {
  Scalar lhs;
  Scalar rhs;
};

/// Both sides of prod_i P(X_i = 0)^S <= P(all X_i = 0) + (m / (m + 1))^((m + 1) S).
/// joint[mask] = P(X_i = bit i of mask for all i) over {0,1}^(m+1).
template <class Scalar>
Lemma47Sides<Scalar> lemma47_sides(std::span<const Scalar> joint, int S) {
  const std::size_t size = joint.size();
  if (size < 4 || (size & (size - 1)) != 0) throw std::invalid_argument("lemma47: need 2^(m+1) entries with m >= 1");
  if (S < 1) throw std::invalid_argument("lemma47: S must be positive");
  int vars = 0;
  while ((std::size_t{1} << vars) < size) ++vars;
  Scalar total(0);
  for (const auto& p : joint) {
    if (p < Scalar(0)) throw std::invalid_argument("lemma47: negative probability");
    total += p;
  }
  using std::abs;
  if (abs(total - Scalar(1)) > Scalar(1e-12)) throw std::invalid_argument("lemma47: probabilities must sum to 1");

  auto power = [](Scalar b, int e) {
    Scalar r(1);
    for (int i = 0; i < e; ++i) r *= b;
    return r;
  };
  Scalar lhs(1);
  for (int i = 0; i < vars; ++i) {
    Scalar zero(0);
    for (std::size_t mask = 0; mask < size; ++mask)
      if (!((mask >> i) & 1u)) zero += joint[mask];
    lhs *= power(zero, S);
  }
  const int m = vars - 1;
  const Scalar rhs = joint[0] + power(Scalar(m) / Scalar(m + 1), (m + 1) * S);
  return {lhs, rhs};
}

struct Lemma47Result {
  bool holds = true;
  double slack = 0.0;  ///< rhs - lhs
};

Lemma47Result lemma47_check(std::span<const double> joint, int S);

/// One inequality of the product-versus-sum comparison: prod of marginal
/// probabilities for the process from S eta against the probability of a sum
/// bound for the process from eta, plus an additive term.
struct ProductBound {
  std::string name;
  double lhs = 0.0;
  double lhs_se = 0.0;
  double rhs_prob = 0.0;
  double rhs_prob_se = 0.0;
  /// (1 - 1/n)^(n S) for n factors, the term that follows from lemma47.
  double additive = 0.0;
  /// The term as usually displayed for this bound; differs from `additive`
  /// for d >= 2 in the orthant bounds.
  double additive_displayed = 0.0;
  /// lhs above rhs_prob + additive by more than 3 standard errors.
  bool violated = false;
  bool violated_displayed = false;
};

struct Corollary49Report {
  std::vector<ProductBound> bounds;  ///< top orthants, face orthants, sums
  std::size_t n_reps = 0;
  std::size_t capped = 0;
};

/// Top orthants (2^d factors, threshold 2^d K on the sum), face orthants
/// (d 2^d factors, threshold d 2^d K) and the pair of sums with K, K'.
Corollary49Report corollary49_check(const BrwParams& params, const Configuration& eta, const SpaceTimeBox& box,
                                    std::int64_t K, std::int64_t K2, int S, std::size_t n_reps,
                                    std::uint64_t seed, const ReplicaOptions& ro = {});

}  // namespace brwd
