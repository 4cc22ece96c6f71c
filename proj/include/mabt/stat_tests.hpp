#pragma once

#include <cmath>
#include <cstdint>

#include "mabt/errors.hpp"

namespace mabt {

// One-sided pooled two-proportion z test of H0: p0 >= p1, rejected when
// z > cutoff. Degenerate inputs (an empty arm, or pooled variance zero)
// never reject.
inline bool z_test(std::int64_t s1, std::int64_t n1, std::int64_t s0,
                   std::int64_t n0, double cutoff) {
  if (n1 <= 0 || n0 <= 0) return false;
  double p1 = static_cast<double>(s1) / n1;
  double p0 = static_cast<double>(s0) / n0;
  double pooled = static_cast<double>(s1 + s0) / (n1 + n0);
  double var = pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n0);
  if (var <= 0.0) return false;
  double z = (p1 - p0) / std::sqrt(var);
  return z > cutoff;
}

namespace detail {

inline double log_choose(std::int64_t n, std::int64_t k) {
  return std::lgamma(static_cast<double>(n) + 1.0) -
         std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

}  // namespace detail

// One-sided Fisher exact p-value: probability, conditional on the margins,
// of the treatment arm showing s1 or more successes. Computed in log space,
// so it stays exact well past n = 1e6. Empty arms carry no evidence (p = 1).
inline double fisher_exact_pvalue(std::int64_t s1, std::int64_t n1,
                                  std::int64_t s0, std::int64_t n0) {
  if (s1 < 0 || s0 < 0 || s1 > n1 || s0 > n0)
    throw DomainError("fisher_exact_pvalue: need 0 <= s <= n for both arms");
  if (n1 == 0 || n0 == 0) return 1.0;
  std::int64_t m = s1 + s0;  // successes margin
  std::int64_t lo = m - n0 > 0 ? m - n0 : 0;
  std::int64_t hi = m < n1 ? m : n1;
  if (s1 <= lo) return 1.0;
  double log_total = detail::log_choose(n1 + n0, m);
  // Accumulate the tail from the most probable included table downward.
  double log_first = detail::log_choose(n1, s1) + detail::log_choose(n0, m - s1) -
                     log_total;
  double sum = 1.0;
  double log_term = 0.0;  // relative to log_first
  for (std::int64_t x = s1 + 1; x <= hi; ++x) {
    // P(x) / P(x-1) = (n1-x+1)(m-x+1) / (x (n0-m+x))
    log_term += std::log(static_cast<double>(n1 - x + 1)) +
                std::log(static_cast<double>(m - x + 1)) -
                std::log(static_cast<double>(x)) -
                std::log(static_cast<double>(n0 - m + x));
    sum += std::exp(log_term);
  }
  double p = std::exp(log_first) * sum;
  return p < 1.0 ? p : 1.0;
}

// Inverse standard normal CDF (Acklam's rational approximation polished by
// one Halley step; absolute error < 1e-12 on (0,1)).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw DomainError("normal_quantile: p must lie in (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double e[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((e[0] * q + e[1]) * q + e[2]) * q + e[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    double q = p - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((e[0] * q + e[1]) * q + e[2]) * q + e[3]) * q + 1.0);
  }
  // One Halley refinement using the CDF via erfc.
  double err = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  double u = err * std::sqrt(2.0 * 3.14159265358979323846) * std::exp(0.5 * x * x);
  x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

}  // namespace mabt
