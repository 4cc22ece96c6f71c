#pragma once

#include <cstdint>

#include "mabt/errors.hpp"
#include "mabt/rng.hpp"

namespace mabt {

struct Outcome {
  bool success = false;
};

// Beta-Bernoulli arm: Beta(prior_s, prior_f) prior plus observed success and
// failure counts. Priors are positive integers; the posterior after (obs_s,
// obs_f) observations is Beta(prior_s + obs_s, prior_f + obs_f).
struct ArmState {
  std::uint32_t prior_s = 1;
  std::uint32_t prior_f = 1;
  std::uint32_t obs_s = 0;
  std::uint32_t obs_f = 0;

  std::uint32_t total_s() const { return prior_s + obs_s; }
  std::uint32_t total_f() const { return prior_f + obs_f; }
  std::uint32_t total_n() const { return total_s() + total_f(); }

  void validate() const {
    if (prior_s < 1 || prior_f < 1)
      throw ConfigError("ArmState: priors must be integers >= 1");
  }
};

inline double posterior_mean(const ArmState& x) {
  return static_cast<double>(x.total_s()) / static_cast<double>(x.total_n());
}

// Pure: returns the updated copy, the argument is untouched.
inline ArmState apply_outcome(ArmState x, Outcome o) {
  if (o.success)
    ++x.obs_s;
  else
    ++x.obs_f;
  return x;
}

// Draws a Bernoulli(true_p) outcome, consuming exactly one uniform variate.
inline Outcome sample_outcome(Rng& rng, double true_p) {
  if (true_p < 0.0 || true_p > 1.0)
    throw DomainError("sample_outcome: true_p must lie in [0,1]");
  return Outcome{rng.bernoulli(true_p)};
}

}  // namespace mabt
