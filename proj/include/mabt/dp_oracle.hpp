#pragma once

#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "mabt/arm_state.hpp"
#include "mabt/calibration.hpp"
#include "mabt/errors.hpp"

namespace mabt {

struct OracleResult {
  double value = 0.0;
  int first_action = 0;
  std::vector<int> tie_set;  // every arm attaining the optimal first value
};

namespace detail {

// Joint observation-count vectors are the memo keys; the stage is implied by
// their sum, so one map covers the whole recursion.
struct VecHash {
  std::size_t operator()(const std::vector<std::uint16_t>& v) const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::uint16_t x : v) {
      h ^= x;
      h *= 0x100000001b3ull;
    }
    return static_cast<std::size_t>(h);
  }
};

using JointMemo =
    std::unordered_map<std::vector<std::uint16_t>, double, VecHash>;

// Number of nonnegative integer vectors of length dim with sum <= total,
// i.e. C(total + dim, dim); saturates at the guard rather than overflowing.
inline std::uint64_t joint_state_count(int total, int dim, std::uint64_t cap) {
  std::uint64_t count = 1;
  for (int i = 1; i <= dim; ++i) {
    count = count * static_cast<std::uint64_t>(total + i) / i;
    if (count > cap) return cap + 1;
  }
  return count;
}

inline void check_oracle_capacity(int K, int horizon) {
  constexpr std::uint64_t kGuard = 10'000'000;
  if (joint_state_count(horizon, 2 * K, kGuard) > kGuard)
    throw CapacityError(
        "finite_horizon_dp_oracle: joint state space exceeds the 1e7 guard");
}

template <typename ValueFn>
double joint_value(const std::vector<ArmState>& base,
                   std::vector<std::uint16_t>& obs, int t, int horizon,
                   double d, JointMemo& memo, ValueFn&& arm_value) {
  if (t == horizon) return 0.0;
  auto it = memo.find(obs);
  if (it != memo.end()) return it->second;
  double best = arm_value(base, obs, t, 0);
  int K = static_cast<int>(base.size());
  for (int k = 1; k < K; ++k) {
    double v = arm_value(base, obs, t, k);
    if (v > best) best = v;
  }
  memo.emplace(obs, best);
  return best;
}

}  // namespace detail

// Exact optimal expected total discounted successes for the joint K-arm
// problem over `horizon` pulls, by memoized backward recursion. Guarded
// against joint state spaces above 1e7.
inline OracleResult finite_horizon_dp_oracle(const std::vector<ArmState>& states,
                                             int horizon, double discount) {
  if (states.empty())
    throw ConfigError("finite_horizon_dp_oracle: need at least one arm");
  if (horizon < 1)
    throw DomainError("finite_horizon_dp_oracle: horizon must be >= 1");
  for (const auto& x : states) x.validate();
  int K = static_cast<int>(states.size());
  detail::check_oracle_capacity(K, horizon);

  detail::JointMemo memo;
  // Expected value of pulling arm k once at stage t and then acting optimally.
  std::function<double(const std::vector<ArmState>&, std::vector<std::uint16_t>&,
                       int, int)>
      arm_value = [&](const std::vector<ArmState>& base,
                      std::vector<std::uint16_t>& obs, int t, int k) -> double {
    ArmState x = base[k];
    x.obs_s += obs[2 * k];
    x.obs_f += obs[2 * k + 1];
    double mean = posterior_mean(x);
    ++obs[2 * k];
    double on_success =
        detail::joint_value(base, obs, t + 1, horizon, discount, memo, arm_value);
    --obs[2 * k];
    ++obs[2 * k + 1];
    double on_failure =
        detail::joint_value(base, obs, t + 1, horizon, discount, memo, arm_value);
    --obs[2 * k + 1];
    return mean * (1.0 + discount * on_success) +
           (1.0 - mean) * (discount * on_failure);
  };

  std::vector<std::uint16_t> obs(2 * K, 0);
  OracleResult out;
  double best = 0.0;
  std::vector<double> root(K);
  for (int k = 0; k < K; ++k) root[k] = arm_value(states, obs, 0, k);
  best = root[0];
  for (int k = 1; k < K; ++k)
    if (root[k] > best) best = root[k];
  out.value = best;
  for (int k = 0; k < K; ++k)
    if (root[k] == best) out.tie_set.push_back(k);
  out.first_action = out.tie_set.front();
  return out;
}

// Exact expected value of following a per-arm index policy (ties to the
// lowest arm id) over `horizon` pulls. `index_fn(s, f, remaining)` scores an
// arm with posterior totals (s, f).
inline double index_policy_rollout_value(
    const std::vector<ArmState>& states, int horizon, double discount,
    const std::function<double(int, int, int)>& index_fn) {
  if (states.empty()) throw ConfigError("index_policy_rollout_value: no arms");
  if (horizon < 1) throw DomainError("index_policy_rollout_value: horizon >= 1");
  int K = static_cast<int>(states.size());
  detail::check_oracle_capacity(K, horizon);

  detail::JointMemo memo;
  std::function<double(std::vector<std::uint16_t>&, int)> value =
      [&](std::vector<std::uint16_t>& obs, int t) -> double {
    if (t == horizon) return 0.0;
    auto it = memo.find(obs);
    if (it != memo.end()) return it->second;
    int pick = 0;
    double best_index = 0.0;
    for (int k = 0; k < K; ++k) {
      int s = static_cast<int>(states[k].total_s()) + obs[2 * k];
      int f = static_cast<int>(states[k].total_f()) + obs[2 * k + 1];
      double idx = index_fn(s, f, horizon - t);
      if (k == 0 || idx > best_index) {
        best_index = idx;
        pick = k;
      }
    }
    int s = static_cast<int>(states[pick].total_s()) + obs[2 * pick];
    int f = static_cast<int>(states[pick].total_f()) + obs[2 * pick + 1];
    double mean = static_cast<double>(s) / (s + f);
    ++obs[2 * pick];
    double on_success = value(obs, t + 1);
    --obs[2 * pick];
    ++obs[2 * pick + 1];
    double on_failure = value(obs, t + 1);
    --obs[2 * pick + 1];
    double v = mean * (1.0 + discount * on_success) +
               (1.0 - mean) * (discount * on_failure);
    memo.emplace(obs, v);
    return v;
  };

  std::vector<std::uint16_t> obs(2 * K, 0);
  return value(obs, 0);
}

// Exact value of the finite-horizon Whittle-index policy, with the index at
// each stage computed for the true remaining horizon. Index values are cached
// across joint states.
inline double whittle_policy_rollout(const std::vector<ArmState>& states,
                                     int horizon, double discount,
                                     double tolerance = 1e-6) {
  IndexConfig cfg;
  cfg.mode = IndexMode::finite_whittle;
  cfg.discount = discount;
  cfg.truncation_horizon = horizon < 2 ? 2 : horizon;
  cfg.tolerance = tolerance;
  std::unordered_map<std::uint64_t, double> cache;
  auto index_fn = [&](int s, int f, int remaining) -> double {
    std::uint64_t key = (static_cast<std::uint64_t>(s) << 40) |
                        (static_cast<std::uint64_t>(f) << 16) |
                        static_cast<std::uint64_t>(remaining);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    double v = whittle_index(s, f, remaining, cfg);
    cache.emplace(key, v);
    return v;
  };
  return index_policy_rollout_value(states, horizon, discount, index_fn);
}

}  // namespace mabt
