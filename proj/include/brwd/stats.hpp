#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace brwd {

/// Welford accumulator. Results depend on insertion order, so callers feed
/// values in a canonical order to stay reproducible.
class RunningStats {
 public:
  void add(double x) noexcept;
  void merge(const RunningStats& other) noexcept;

  std::size_t count() const noexcept { return n_; }
  double mean() const noexcept { return mean_; }
  /// Unbiased sample variance; NaN for fewer than two values.
  double variance() const noexcept;
  double stddev() const noexcept;
  /// Standard error of the mean; NaN for fewer than two values.
  double std_error() const noexcept;

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// sqrt(p(1-p)/n).
double binomial_std_error(double p_hat, std::size_t n) noexcept;

double normal_cdf(double z);

/// Upper tail of the chi-squared distribution.
double chi_squared_sf(double statistic, double dof);

struct ChiSquareResult {
  double statistic = 0.0;
  double dof = 0.0;
  double p_value = 1.0;
};

/// Pearson goodness of fit. Cells with expected count below min_expected are
/// pooled into their neighbours; fitted_params reduces the degrees of freedom.
ChiSquareResult chi_square_gof(std::span<const double> observed, std::span<const double> expected,
                               double min_expected = 5.0, int fitted_params = 0);

/// Chi-squared test of homogeneity for a 2 x k table of counts.
ChiSquareResult chi_square_homogeneity(std::span<const double> a, std::span<const double> b,
                                       double min_expected = 5.0);

/// Survival function of the Kolmogorov distribution, P(K > x).
double kolmogorov_sf(double x);

/// One-sample Kolmogorov-Smirnov statistic of sample against cdf.
double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf);

/// Asymptotic p-value with the Stephens small-sample correction.
double ks_pvalue(double d, std::size_t n);

/// Two-sample KS statistic and its asymptotic p-value.
double ks_two_sample_statistic(std::vector<double> a, std::vector<double> b);
double ks_two_sample_pvalue(double d, std::size_t n1, std::size_t n2);

/// Pearson correlation; NaN when either sample is constant.
double pearson_correlation(std::span<const double> x, std::span<const double> y);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Ordinary least squares fit of y on x (needs two distinct x values).
LinearFit ols_fit(std::span<const double> x, std::span<const double> y);

}  // namespace brwd
