#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include "mabt/errors.hpp"

namespace mabt {

using bigint = boost::multiprecision::cpp_int;

struct ComplexityEstimates {
  // Value-function evaluations for the joint dynamic program with uniform
  // priors and truncation T: (T-1)! / ((2K)! (T-2K-1)!) = C(T-1, 2K).
  bigint brute_dp_count;
  // Arithmetic operations for one index table at truncation T, per calibration
  // rate: (T-1)(T-2)/2. Independent of the number of arms.
  bigint index_count;
};

inline bigint binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  bigint out = 1;
  for (int i = 1; i <= k; ++i) {
    out *= n - k + i;
    out /= i;
  }
  return out;
}

inline ComplexityEstimates complexity_estimates(int horizon, int arms) {
  if (arms < 1) throw DomainError("complexity_estimates: arms must be >= 1");
  if (horizon < 2 * arms + 1)
    throw DomainError(
        "complexity_estimates: horizon must be >= 2*arms + 1 (factorial "
        "argument would be negative)");
  ComplexityEstimates out;
  out.brute_dp_count = binomial(horizon - 1, 2 * arms);
  out.index_count = bigint(horizon - 1) * (horizon - 2) / 2;
  return out;
}

// Size of the exhaustive search space when every length-T allocation sequence
// is enumerated: K^T. Complete enumeration has no closed-form operation count
// beyond this; it is the natural yardstick the DP and index counts are
// compared against.
inline bigint sequence_count(int horizon, int arms) {
  if (arms < 1 || horizon < 0)
    throw DomainError("sequence_count: need arms >= 1 and horizon >= 0");
  return boost::multiprecision::pow(bigint(arms),
                                    static_cast<unsigned>(horizon));
}

}  // namespace mabt
