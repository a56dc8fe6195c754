#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "brwd/random.hpp"

namespace brwd {

/// Bin weights p_0 <= ... <= p_N summing to 1. Sorting happens on construction.
class WeightVector {
 public:
  explicit WeightVector(std::vector<double> w);

  std::size_t size() const noexcept { return w_.size(); }
  double operator[](std::size_t i) const { return w_[i]; }
  std::span<const double> values() const noexcept { return w_; }

 private:
  std::vector<double> w_;
};

/// Element of {0,1}^length; bit i is coordinate i.
struct ParityConfig {
  std::uint32_t bits = 0;
  int length = 0;

  int bit(int i) const { return static_cast<int>((bits >> i) & 1u); }
  int ones() const;
  bool in_sigma() const { return ones() % 2 == 0; }
  /// "0110" with coordinate 0 first.
  std::string to_string() const;

  friend bool operator==(const ParityConfig&, const ParityConfig&) = default;
};

ParityConfig make_config(std::initializer_list<int> bits);

/// Largest supported number of bins.
inline constexpr int kMaxBins = 13;

/// Masks of the even-weight configurations of the given length, ascending.
std::vector<std::uint32_t> sigma_elements(int length);

/// Probability vector on the even configurations of one length, aligned with sigma_elements.
class DistOnSigma {
 public:
  DistOnSigma(int length, std::vector<double> mass);

  static DistOnSigma uniform(int length);

  int length() const noexcept { return length_; }
  std::size_t size() const noexcept { return mass_.size(); }
  std::span<const double> masses() const noexcept { return mass_; }
  double operator()(const ParityConfig& c) const;

 private:
  int length_;
  std::vector<double> mass_;
};

/// P(Binomial(n, p) is even) = (1 + (1 - 2p)^n) / 2.
double binom_parity_even(std::uint64_t n, double p);

/// Law of the parity vector after k balls are thrown into bins with weights w,
/// indexed by mask over all 2^|w| configurations. Each ball flips the parity
/// of the bin it lands in.
template <class Scalar>
std::vector<Scalar> parity_state_law(std::span<const Scalar> w, int k) {
  if (w.empty() || w.size() > static_cast<std::size_t>(kMaxBins)) throw std::invalid_argument("parity law: bad bin count");
  if (k < 0) throw std::invalid_argument("parity law: negative ball count");
  const std::size_t states = std::size_t{1} << w.size();
  std::vector<Scalar> cur(states, Scalar(0)), next(states, Scalar(0));
  cur[0] = Scalar(1);
  for (int b = 0; b < k; ++b) {
    for (auto& v : next) v = Scalar(0);
    for (std::size_t s = 0; s < states; ++s) {
      if (cur[s] == Scalar(0)) continue;
      for (std::size_t i = 0; i < w.size(); ++i) next[s ^ (std::size_t{1} << i)] += cur[s] * w[i];
    }
    std::swap(cur, next);
  }
  return cur;
}

/// Exact law of the parity configuration of k balls (k even).
DistOnSigma parity_dist(const WeightVector& w, int k);

/// Prefix-sum order: every prefix sum of I is at most that of J.
bool prefix_leq(const ParityConfig& I, const ParityConfig& J);

/// Sorted partial sums of mu never exceed those of nu.
bool majorization_leq(const DistOnSigma& mu, const DistOnSigma& nu, double tol = 1e-12);

/// Convex-function characterisation with the hockey-stick functions
/// (x - c)_+ at every mass value c: sum f(mu) <= sum f(nu) for all of them.
bool hockey_stick_leq(const DistOnSigma& mu, const DistOnSigma& nu, double tol = 1e-12);

/// sum mu^-delta <= sum nu^-delta for delta in {0.1, ..., 0.9}; a necessary
/// condition for mu to be majorized by nu.
bool power_family_leq(const DistOnSigma& mu, const DistOnSigma& nu, double tol = 1e-9);

/// Tries to reach mu from nu by a chain of T-transforms (Robin Hood moves);
/// succeeds exactly when mu is majorized by nu.
bool t_transform_reachable(const DistOnSigma& mu, const DistOnSigma& nu, double tol = 1e-12);

/// Pairs (I, J) with I below J in the prefix order but P(I) < P(J) - tol,
/// for 2k balls.
std::vector<std::pair<ParityConfig, ParityConfig>> lemma38i_check(const WeightVector& w, int k, double tol = 1e-12);
/// Same check without sorting the weights first.
std::vector<std::pair<ParityConfig, ParityConfig>> lemma38i_check_unsorted(std::span<const double> w, int k,
                                                                            double tol = 1e-12);

/// Coupled parity vectors for 2k and 2k + 2 balls; the first is always below
/// the second in the prefix order.
std::pair<ParityConfig, ParityConfig> couple_parity(const WeightVector& w, int k, Rng& rng);

/// P(Z_k = x1) / P(Z_l = x1) <= 2^(l - k) for the discrete simple walk on Z.
/// Throws std::invalid_argument unless k <= l, k = l = x1 mod 2 and |x1| <= k.
bool lemma37_inequality(int k, int l, int x1);

/// Conditional laws of the jump counts on [0, 1] of the first coordinate:
/// fast[n] = P(R_X = n | X(1) = x1) at jump rate `rate`, and
/// slow[n] = P(R_Y = n | Y(1) = x1 mod 2) at rate rate / 2, for n <= n_max.
struct JumpCountLaws {
  std::vector<double> fast;
  std::vector<double> slow;
};

/// Throws std::domain_error if the truncated Poisson tail exceeds 1e-12.
JumpCountLaws conditional_jump_laws(double rate, int x1, int n_max);

/// Likelihood-ratio order check of the two laws above; true at rate 0.
bool lr_order_check(double rate, int x1, int n_max);

/// Pointwise CDF comparison of the same laws (slow CDF >= fast CDF).
bool cdf_dominance_check(double rate, int x1, int n_max);

/// The two mixtures over jump counts: mu uses the fast law, nu the slow one
/// (first-coordinate reading on Z).
std::pair<DistOnSigma, DistOnSigma> jump_mixture_measures(const WeightVector& w, double rate, int x1, int n_max);

}  // namespace brwd
