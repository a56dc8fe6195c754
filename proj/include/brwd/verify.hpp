#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace brwd {

/// Outcome of one oracle suite. Exact suites compare against independent
/// computations (rational enumeration, closed forms); the coupling suite also
/// runs goodness-of-fit tests on fixed-seed samples.
struct SuiteResult {
  std::string group;  ///< "parity", "orders" or "lemma47"
  std::string name;
  bool passed = true;
  std::size_t checks = 0;
  std::size_t failures = 0;
  std::string detail;
};

/// binom_parity_even against exact rational pmf sums, n <= n_max, p on a 0.05 grid.
SuiteResult verify_parity_closed_form(int n_max = 30);

/// Parity DP against enumeration of all ordered ball placements, in rationals.
SuiteResult verify_parity_dp(std::uint64_t seed);

/// majorization_leq against the hockey-stick and T-transform characterisations.
SuiteResult verify_majorization(std::uint64_t seed, std::size_t n_pairs = 2000);

/// Zero prefix-order violations of the parity law for N + 1 bins, N <= n_max,
/// k <= k_max, over n_vectors random sorted weight vectors per N.
SuiteResult verify_parity_monotone(std::uint64_t seed, int n_max = 4, int k_max = 3, std::size_t n_vectors = 100);

/// couple_parity: no order violations in n_samples draws and chi-squared
/// p-values above 0.01 for both marginals against the exact laws.
SuiteResult verify_parity_coupling(std::uint64_t seed, std::size_t n_samples = 100000);

/// Walk probability ratio bound, exhaustive for k <= l <= l_max.
SuiteResult verify_walk_ratio(int l_max = 40);

/// Likelihood-ratio order for rates {0.5, 1, 4}, x1 in {0, 2}, n_max = 60.
SuiteResult verify_lr_order();

/// Product inequality on n_laws random joint laws, m <= 5, S <= 4, in rationals,
/// plus the extremal equality case.
SuiteResult verify_lemma47(std::uint64_t seed, std::size_t n_laws = 10000);

/// Every suite above in a fixed order.
std::vector<SuiteResult> run_oracle_suites(std::uint64_t seed);

}  // namespace brwd
