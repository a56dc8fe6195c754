#pragma once

#include <cstdint>
#include <vector>

#include "brwd/brw.hpp"
#include "brwd/env.hpp"
#include "brwd/stats.hpp"

namespace brwd {

/// Empirical law of the number of particles at the origin at time kT that
/// descend from one particle at the origin at time (k-1)T.
struct OffspringSample {
  int k = 1;
  std::vector<double> pmf;
  std::size_t n_reps = 0;
  double mean = 0.0;
  double std_err = 0.0;
  std::size_t capped = 0;
};

OffspringSample sample_offspring(const DisasterField& field, const BrwParams& params, double T, int k,
                                 std::size_t n_reps, std::uint64_t seed, const ReplicaOptions& ro = {});

struct IdentityCheck {
  double lhs = 0.0;
  double lhs_se = 0.0;
  double rhs = 0.0;
  double rhs_se = 0.0;
  double z = 0.0;
};

/// lhs: mean offspring in the first period; rhs: exp(lambda (m-1) T) times the
/// pinned walker survival estimate in the same field.
IdentityCheck identity_3_8_check(const DisasterField& field, const BrwParams& params, double T, std::size_t n_reps,
                                 std::size_t n_walkers, std::uint64_t seed, const ReplicaOptions& ro = {});

struct BoundCheck {
  double lhs = 0.0;  ///< 1 - q_hat(0)
  double lhs_se = 0.0;
  double rhs = 0.0;  ///< exp(-lambda T q(0)) times the pinned survival estimate
  double rhs_se = 0.0;
  /// lhs + 3 sigma < rhs
  bool violated = false;
};

BoundCheck nonextinction_bound_check(const DisasterField& field, const BrwParams& params, double T,
                                     std::size_t n_reps, std::size_t n_walkers, std::uint64_t seed,
                                     const ReplicaOptions& ro = {});

enum class Phase { subcritical, critical_band, supercritical };

std::string_view to_string(Phase p);

struct PhaseVerdict {
  double criterion = 0.0;  ///< lambda (m - 1) + p_hat
  double std_err = 0.0;
  Phase verdict = Phase::critical_band;
  double p_hat = 0.0;
  double censor_fraction = 0.0;
  /// More than half of the environments were censored.
  bool unreliable = false;
};

PhaseVerdict phase_classify(const BrwParams& params, double t_lyap, std::size_t n_env, std::size_t n_walkers,
                            std::uint64_t seed, int threads = 1);

struct IndependenceReport {
  /// Correlation across fields of the first and second period means.
  double correlation = 0.0;
  double correlation_p = 1.0;
  /// Homogeneity of first and second period counts, one tree per field.
  ChiSquareResult homogeneity;
  /// Two-sample KS on the per-field means.
  double ks_p = 1.0;
  /// Mean of log(1 - q_hat(0)) over fields where it is finite.
  double mean_log_nonextinction = 0.0;
  /// Fraction of fields with q_hat(0) = 1.
  double degenerate_fraction = 0.0;
};

IndependenceReport offspring_independence(const BrwParams& params, double T, std::size_t n_fields,
                                          std::size_t n_reps, std::uint64_t seed, int threads = 1);

struct PeriodChoice {
  double T = 1.0;
  /// exp(lambda (m-1) T) E[S~(T)], computed in closed form.
  double expected_mean = 0.0;
  bool in_range = false;
};

/// exp(-alpha T) P(X_T = 0), the environment average of the pinned survival.
double annealed_pinned_survival(double kappa, double alpha, int dim, double T);

/// Largest T on a 0.25 grid up to t_max with expected offspring mean in [lo, hi];
/// if none qualifies, the grid point closest to the range in log scale.
PeriodChoice choose_period(const BrwParams& params, double t_max = 10.0, double lo = 0.5, double hi = 50.0);

}  // namespace brwd
