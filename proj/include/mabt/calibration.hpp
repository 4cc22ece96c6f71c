#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mabt/arm_state.hpp"
#include "mabt/errors.hpp"

namespace mabt {

enum class IndexMode { infinite_gittins, finite_whittle };

inline const char* to_string(IndexMode m) {
  return m == IndexMode::infinite_gittins ? "infinite-gittins" : "finite-whittle";
}

struct IndexConfig {
  double discount = 0.99;
  int truncation_horizon = 750;
  double tolerance = 1e-6;
  IndexMode mode = IndexMode::infinite_gittins;

  void validate() const {
    if (!(discount >= 0.0 && discount <= 1.0))
      throw ConfigError("IndexConfig: discount must lie in [0,1]");
    if (mode == IndexMode::infinite_gittins && discount >= 1.0)
      throw ConfigError("IndexConfig: infinite-gittins mode requires discount < 1");
    if (truncation_horizon < 2)
      throw ConfigError("IndexConfig: truncation_horizon must be >= 2");
    if (!(tolerance > 0.0))
      throw ConfigError("IndexConfig: tolerance must be > 0");
  }
};

namespace detail {

// Two-arm calibration problem: a known arm paying p per pull versus a
// Beta(s0,f0) risky arm, with `steps` pulls left at the root and discount d.
// Backward induction runs over the cone {(s0+a, f0+b) : a+b <= steps-1};
// at depth i the remaining horizon is steps - i, and the value after the last
// pull is zero. `g[r]` is the known arm's full payoff over r pulls
// (sum of d^i for i < r, which is plain r when d = 1).
//
// Returns both branches of the root maximization so callers can locate the
// indifference point in p.
struct CalibrationBranches {
  double known;  // commit to the known arm for all remaining pulls
  double risky;  // pull the risky arm once, then act optimally
};

class CalibrationWorkspace {
 public:
  // Reuses buffers across evaluations; one workspace per thread.
  CalibrationBranches branches(int s0, int f0, double p, int steps, double d) {
    if (steps < 1) throw DomainError("calibration: steps must be >= 1");
    prepare(steps, d);
    double* next = a_.data();
    double* cur = b_.data();
    std::fill(next, next + steps + 1, 0.0);
    for (int i = steps - 1; i >= 1; --i) {
      double inv = 1.0 / static_cast<double>(s0 + f0 + i);
      double pg = p * g_[steps - i];
      for (int j = 0; j <= i; ++j) {
        double mean = static_cast<double>(s0 + j) * inv;
        double v = mean * (1.0 + d * next[j + 1]) + (1.0 - mean) * (d * next[j]);
        cur[j] = v > pg ? v : pg;
      }
      std::swap(cur, next);
    }
    double mean = static_cast<double>(s0) / static_cast<double>(s0 + f0);
    double risky = mean * (1.0 + d * next[1]) + (1.0 - mean) * (d * next[0]);
    return {p * g_[steps], risky};
  }

 private:
  void prepare(int steps, double d) {
    if (static_cast<int>(a_.size()) < steps + 1) {
      a_.resize(steps + 1);
      b_.resize(steps + 1);
    }
    if (static_cast<int>(g_.size()) < steps + 1 || d != g_discount_) {
      g_.resize(steps + 1);
      g_[0] = 0.0;
      for (int r = 1; r <= steps; ++r) g_[r] = 1.0 + d * g_[r - 1];
      g_discount_ = d;
    }
  }

  std::vector<double> a_, b_, g_;
  double g_discount_ = -1.0;
};

// Indifference point of Delta(p) = known(p) - risky(p), which is strictly
// negative for p below the index and nonnegative above it. The initial
// bracket must satisfy Delta(lo) < 0 <= Delta(hi); lo = mean - eps and hi = 1
// always do (a known arm below the posterior mean is beaten by never
// stopping, and p = 1 dominates any continuation).
inline double bisect_index(CalibrationWorkspace& ws, int s0, int f0, int steps,
                           double d, double tol, double lo, double hi) {
  while (hi - lo > tol) {
    double mid = 0.5 * (lo + hi);
    CalibrationBranches b = ws.branches(s0, f0, mid, steps, d);
    if (b.known - b.risky >= 0.0)
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

inline void check_counts(int total_s, int total_f) {
  if (total_s < 1 || total_f < 1)
    throw DomainError("index: total_s and total_f must be >= 1");
}

}  // namespace detail

// Value of the calibration problem rooted at (total_s, total_f) against a
// known arm of rate p. Infinite mode anchors the truncation to the state
// diagonal: the root gets truncation_horizon - (total_s + total_f) pulls, so
// the grid never leaves {s'+f' <= truncation_horizon - 1}.
inline double calibration_value(int total_s, int total_f, double p,
                                const IndexConfig& cfg) {
  cfg.validate();
  detail::check_counts(total_s, total_f);
  if (p < 0.0 || p > 1.0) throw DomainError("calibration_value: p must lie in [0,1]");
  int steps = cfg.truncation_horizon - total_s - total_f;
  if (steps < 1)
    throw DomainError(
        "calibration_value: state outside grid (total_s + total_f must be <= "
        "truncation_horizon - 1)");
  detail::CalibrationWorkspace ws;
  auto b = ws.branches(total_s, total_f, p, steps, cfg.discount);
  return std::max(b.known, b.risky);
}

// Gittins index: the known-arm rate p at which the decision maker is
// indifferent between committing to p and pulling the risky arm once before
// re-optimizing. Located by bisection to cfg.tolerance.
inline double gittins_index(int total_s, int total_f, const IndexConfig& cfg) {
  cfg.validate();
  if (cfg.mode != IndexMode::infinite_gittins)
    throw ConfigError("gittins_index: cfg.mode must be infinite-gittins");
  detail::check_counts(total_s, total_f);
  int steps = cfg.truncation_horizon - total_s - total_f;
  if (steps < 1)
    throw DomainError(
        "gittins_index: total_s + total_f must be <= truncation_horizon - 1");
  detail::CalibrationWorkspace ws;
  double mean = static_cast<double>(total_s) / (total_s + total_f);
  double lo = std::max(0.0, mean - 4.0 * cfg.tolerance);
  return detail::bisect_index(ws, total_s, total_f, steps, cfg.discount,
                              cfg.tolerance, lo, 1.0);
}

// Finite-horizon (Whittle) index: same calibration with exactly `remaining`
// pulls left. At remaining = 1 the index is the posterior mean, exactly.
inline double whittle_index(int total_s, int total_f, int remaining,
                            const IndexConfig& cfg) {
  cfg.validate();
  if (cfg.mode != IndexMode::finite_whittle)
    throw ConfigError("whittle_index: cfg.mode must be finite-whittle");
  detail::check_counts(total_s, total_f);
  if (remaining == 0)
    throw DomainError("whittle_index: remaining = 0 has no index (absorbing)");
  if (remaining < 0 || remaining > cfg.truncation_horizon)
    throw DomainError("whittle_index: remaining must lie in [1, truncation_horizon]");
  double mean = static_cast<double>(total_s) / (total_s + total_f);
  if (remaining == 1) return mean;
  detail::CalibrationWorkspace ws;
  double lo = std::max(0.0, mean - 4.0 * cfg.tolerance);
  return detail::bisect_index(ws, total_s, total_f, remaining, cfg.discount,
                              cfg.tolerance, lo, 1.0);
}

}  // namespace mabt
