#include "brwd/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace brwd {

void RunningStats::add(double x) noexcept {
  ++n_;
  const double delta = x - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_ += delta * (x - mean_);
}

void RunningStats::merge(const RunningStats& o) noexcept {
  if (o.n_ == 0) return;
  if (n_ == 0) {
    *this = o;
    return;
  }
  const double n = static_cast<double>(n_ + o.n_);
  const double delta = o.mean_ - mean_;
  mean_ += delta * static_cast<double>(o.n_) / n;
  m2_ += o.m2_ + delta * delta * static_cast<double>(n_) * static_cast<double>(o.n_) / n;
  n_ += o.n_;
}

double RunningStats::variance() const noexcept {
  if (n_ < 2) return std::numeric_limits<double>::quiet_NaN();
  return m2_ / static_cast<double>(n_ - 1);
}

double RunningStats::stddev() const noexcept { return std::sqrt(variance()); }

double RunningStats::std_error() const noexcept {
  if (n_ < 2) return std::numeric_limits<double>::quiet_NaN();
  return std::sqrt(variance() / static_cast<double>(n_));
}

double binomial_std_error(double p, std::size_t n) noexcept {
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  return std::sqrt(std::max(0.0, p * (1.0 - p)) / static_cast<double>(n));
}

double normal_cdf(double z) { return boost::math::cdf(boost::math::normal_distribution<double>(), z); }

double chi_squared_sf(double statistic, double dof) {
  if (dof <= 0) return 1.0;
  if (statistic <= 0) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(dof), statistic));
}

ChiSquareResult chi_square_gof(std::span<const double> observed, std::span<const double> expected,
                               double min_expected, int fitted_params) {
  if (observed.size() != expected.size()) throw std::invalid_argument("chi_square_gof: size mismatch");
  // Pool left to right until each pooled cell reaches min_expected; a short
  // remainder is merged into the last pooled cell.
  std::vector<double> obs, exp;
  double o = 0, e = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    o += observed[i];
    e += expected[i];
    if (e >= min_expected) {
      obs.push_back(o);
      exp.push_back(e);
      o = e = 0;
    }
  }
  if (e > 0 || o > 0) {
    if (exp.empty()) {
      obs.push_back(o);
      exp.push_back(e);
    } else {
      obs.back() += o;
      exp.back() += e;
    }
  }
  ChiSquareResult r;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (exp[i] > 0) r.statistic += (obs[i] - exp[i]) * (obs[i] - exp[i]) / exp[i];
  }
  r.dof = static_cast<double>(obs.size()) - 1.0 - fitted_params;
  r.p_value = chi_squared_sf(r.statistic, r.dof);
  return r;
}

ChiSquareResult chi_square_homogeneity(std::span<const double> a, std::span<const double> b, double min_expected) {
  if (a.size() != b.size()) throw std::invalid_argument("chi_square_homogeneity: size mismatch");
  double na = 0, nb = 0;
  for (double v : a) na += v;
  for (double v : b) nb += v;
  const double n = na + nb;
  ChiSquareResult r;
  if (na <= 0 || nb <= 0) return r;
  // Pool columns by combined count so every expected cell is large enough.
  const double min_col = min_expected * n / std::min(na, nb);
  std::vector<double> ca, cb;
  double sa = 0, sb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
    if (sa + sb >= min_col) {
      ca.push_back(sa);
      cb.push_back(sb);
      sa = sb = 0;
    }
  }
  if (sa + sb > 0) {
    if (ca.empty()) {
      ca.push_back(sa);
      cb.push_back(sb);
    } else {
      ca.back() += sa;
      cb.back() += sb;
    }
  }
  for (std::size_t i = 0; i < ca.size(); ++i) {
    const double col = ca[i] + cb[i];
    const double ea = col * na / n, eb = col * nb / n;
    r.statistic += (ca[i] - ea) * (ca[i] - ea) / ea + (cb[i] - eb) * (cb[i] - eb) / eb;
  }
  r.dof = static_cast<double>(ca.size()) - 1.0;
  r.p_value = chi_squared_sf(r.statistic, r.dof);
  return r;
}

double kolmogorov_sf(double x) {
  if (x <= 0) return 1.0;
  if (x < 0.2) return 1.0;
  double sum = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * x * x);
    sum += (j % 2 == 1 ? term : -term);
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

double ks_pvalue(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  return kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d);
}

double ks_two_sample_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

double ks_two_sample_pvalue(double d, std::size_t n1, std::size_t n2) {
  const double ne = static_cast<double>(n1) * static_cast<double>(n2) / static_cast<double>(n1 + n2);
  const double sn = std::sqrt(ne);
  return kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d);
}

double pearson_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson_correlation: size mismatch");
  const std::size_t n = x.size();
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0 || syy <= 0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

LinearFit ols_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("ols_fit: need two matched points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0) throw std::invalid_argument("ols_fit: x values are all equal");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  return f;
}

}  // namespace brwd
