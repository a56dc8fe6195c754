#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "brwd/env.hpp"
#include "brwd/lattice.hpp"
#include "brwd/random.hpp"

namespace brwd {

struct WalkJump {
  double time = 0.0;
  Site site;
};

/// Continuous-time simple random walk path on [0, horizon]; cadlag, so the
/// position at a jump time is the post-jump site.
struct WalkPath {
  int dim = 1;
  Site start;
  std::vector<WalkJump> jumps;
  double horizon = 0.0;

  Site position_at(double t) const;
};

struct SurvivalEstimate {
  double value = 0.0;
  std::size_t n_samples = 0;
  double std_err = 0.0;
  /// The raw estimate was 0 and value holds the floor 1/(2 n_samples).
  bool censored = false;
};

/// Jump gaps are Exp(kappa); each jump goes to one of the 2d neighbours.
WalkPath simulate_walk(double kappa, int dim, double horizon, Rng& rng, const Site& start = Site{});

/// First time the path sits on a site at a disaster instant, or none.
std::optional<double> extinction_time(const WalkPath& path, DisasterCache& cache);
std::optional<double> extinction_time(const WalkPath& path, const DisasterField& field);

/// Simulates one walker from start up to t in the cached field and reports
/// whether tau >= t. Draws exactly the randomness simulate_walk would.
bool walker_survives(DisasterCache& cache, double kappa, double t, Rng& rng, Site* final_site = nullptr,
                     const Site& start = Site{});

enum class SurvivalMethod {
  /// Fraction of independent walkers, binomial standard error.
  walkers,
  /// Deterministic quenched forward equation on a large box.
  forward_equation,
};

/// Walker estimate of S(t) (or of the pinned quantity when pin_to_origin).
SurvivalEstimate estimate_survival(const DisasterField& field, double kappa, double t, std::size_t n_walkers,
                                   bool pin_to_origin, Rng& rng);
SurvivalEstimate estimate_survival(DisasterCache& cache, double kappa, double t, std::size_t n_walkers,
                                   bool pin_to_origin, Rng& rng);

/// Survival with a fresh environment for every walker; targets exp(-alpha t).
SurvivalEstimate annealed_survival(double kappa, double alpha, int dim, double t, std::size_t n_samples,
                                   std::uint64_t seed);

/// Quenched survival computed from the backward/forward Kolmogorov equation:
/// the sub-probability law of the surviving walker is evolved on the box
/// [-radius, radius]^d (leaving the box counts as death) and the mass at a
/// disaster site is removed at each disaster time.
struct QuenchedSurvival {
  std::vector<double> times;
  std::vector<double> log_survival;  ///< log S(t)
  std::vector<double> log_pinned;    ///< log P(tau >= t, X(t) = 0)
  int radius = 0;
};

/// Default box radius: about six standard deviations of the free walk plus ten sites.
int default_solver_radius(double kappa, double t, int dim);

/// times must be nonnegative and sorted. radius <= 0 picks the default.
QuenchedSurvival solve_quenched_survival(DisasterCache& cache, double kappa, std::span<const double> times,
                                         int radius = 0);

struct LyapunovOptions {
  double kappa = 1.0;
  double alpha = 1.0;
  int dim = 1;
  double t = 20.0;
  std::size_t n_env = 200;
  std::size_t n_walkers = 10000;
  bool pinned = false;
  SurvivalMethod method = SurvivalMethod::forward_equation;
  int threads = 1;
};

struct LyapunovEstimate {
  double p_hat = 0.0;
  double std_err = 0.0;
  double censor_fraction = 0.0;
  /// More than half of the environments hit the zero-survival floor.
  bool dominated_by_censoring = false;
};

/// Mean over n_env fresh environments of log(S_hat(t)) / t. Environments with
/// S_hat = 0 are floored at 1/(2 n_walkers) and counted as censored.
LyapunovEstimate estimate_lyapunov(const LyapunovOptions& opt, std::uint64_t seed);

struct ProfileRow {
  double t = 0.0;
  double mean_log = 0.0;
  double std_log = 0.0;
  /// Standard error of std_log (delta method with the sample fourth moment).
  double std_log_err = 0.0;
  double censor_fraction = 0.0;
  /// false when std_log is undefined (fewer than two environments).
  bool std_valid = true;
};

/// Mean and spread of log S_hat(t) across environments for each t.
std::vector<ProfileRow> concentration_profile(const LyapunovOptions& opt, std::span<const double> t_list,
                                              std::uint64_t seed);

}  // namespace brwd
