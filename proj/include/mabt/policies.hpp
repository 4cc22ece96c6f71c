#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "mabt/arm_state.hpp"
#include "mabt/errors.hpp"
#include "mabt/index_table.hpp"
#include "mabt/rng.hpp"

namespace mabt {

enum class RuleKind { FR, CB, TS, UCB, RBI, RGI, GI, WI, CG };

inline const char* to_string(RuleKind k) {
  switch (k) {
    case RuleKind::FR: return "FR";
    case RuleKind::CB: return "CB";
    case RuleKind::TS: return "TS";
    case RuleKind::UCB: return "UCB";
    case RuleKind::RBI: return "RBI";
    case RuleKind::RGI: return "RGI";
    case RuleKind::GI: return "GI";
    case RuleKind::WI: return "WI";
    case RuleKind::CG: return "CG";
  }
  return "?";
}

inline RuleKind rule_from_string(const std::string& s) {
  if (s == "FR") return RuleKind::FR;
  if (s == "CB") return RuleKind::CB;
  if (s == "TS") return RuleKind::TS;
  if (s == "UCB") return RuleKind::UCB;
  if (s == "RBI") return RuleKind::RBI;
  if (s == "RGI") return RuleKind::RGI;
  if (s == "GI") return RuleKind::GI;
  if (s == "WI") return RuleKind::WI;
  if (s == "CG") return RuleKind::CG;
  throw ConfigError("unknown allocation rule '" + s + "'");
}

// How the exponential perturbation of RBI/RGI reads "parameter 1/K":
// rate (the default; E[Z] = K) or mean (E[Z] = 1/K).
enum class PerturbationParam { rate, mean };

// CG control scheduling: a deterministic cycle (patients 0, K, 2K, ... go to
// control, guaranteeing n_0 = ceil(T/K)) or a probability-1/K coin.
enum class ControlSchedule { cycle, randomized };

struct Policy {
  RuleKind kind = RuleKind::FR;
  std::shared_ptr<const IndexTable> table;  // GI, RGI, WI, CG
  int ts_samples = 1024;
  PerturbationParam perturbation = PerturbationParam::rate;
  ControlSchedule cg_schedule = ControlSchedule::cycle;

  bool needs_infinite_table() const {
    return kind == RuleKind::GI || kind == RuleKind::RGI || kind == RuleKind::CG;
  }
  bool needs_finite_table() const { return kind == RuleKind::WI; }

  // Verifies the table covers every state reachable in a T-patient trial
  // whose largest prior mass is max_prior_sum.
  void validate(int K, int T, int max_prior_sum) const {
    if (kind == RuleKind::TS && ts_samples < 1)
      throw ConfigError("policy: ts_samples must be >= 1");
    if (kind == RuleKind::CG && K < 2)
      throw ConfigError("policy: CG requires at least two arms");
    int need_n = max_prior_sum + T - 1;
    if (needs_infinite_table()) {
      if (!table) throw ConfigError("policy: rule requires an index table");
      if (table->mode() != IndexMode::infinite_gittins)
        throw ConfigError("policy: rule requires an infinite-mode table");
      if (table->max_n() < need_n)
        throw ConfigError("policy: table max_n " + std::to_string(table->max_n()) +
                          " below required " + std::to_string(need_n));
    }
    if (needs_finite_table()) {
      if (!table) throw ConfigError("policy: WI requires finite-mode tables");
      if (table->mode() != IndexMode::finite_whittle)
        throw ConfigError("policy: WI requires a finite-mode table");
      for (int r = 1; r <= T; ++r) {
        int have = table->max_n_at(r);
        int need = max_prior_sum + (T - r);
        if (have < need)
          throw ConfigError("policy: WI table coverage at remaining " +
                            std::to_string(r) + " is " + std::to_string(have) +
                            ", need " + std::to_string(need));
      }
    }
  }
};

// Per-decision random streams. Every component draws from its own stream, so
// the variate budget of one component never shifts another's sequence.
struct DecisionStreams {
  Rng* allocation = nullptr;
  Rng* tie_break = nullptr;
  Rng* ts_sampling = nullptr;
  Rng* perturbation = nullptr;
};

struct AllocationContext {
  int t = 0;
  int T = 1;
  const std::vector<ArmState>* states = nullptr;
  DecisionStreams streams;
};

// Argmax over scores; ties are broken uniformly at random. Exactly one
// tie-break uniform is consumed on every call, tie or not, so variate counts
// per decision are fixed.
inline int argmax_with_tiebreak(const std::vector<double>& scores, Rng& tie_rng) {
  double best = scores[0];
  for (std::size_t k = 1; k < scores.size(); ++k)
    if (scores[k] > best) best = scores[k];
  int ties[64];
  int n_ties = 0;
  for (std::size_t k = 0; k < scores.size(); ++k)
    if (scores[k] == best) ties[n_ties++] = static_cast<int>(k);
  double u = tie_rng.uniform01();
  int pick = static_cast<int>(u * n_ties);
  if (pick >= n_ties) pick = n_ties - 1;
  return ties[pick];
}

// Monte Carlo estimate of P(arm k has the largest success rate | data),
// exponent-damped: probabilities are raised to c = t/(2T) and renormalized.
// At t = 0 the exponent is zero and the output is exactly uniform.
inline std::vector<double> thompson_probs(const std::vector<ArmState>& states,
                                          int t, int T, int samples, Rng& rng) {
  if (samples < 1) throw ConfigError("thompson_probs: samples must be >= 1");
  if (T < 1) throw ConfigError("thompson_probs: T must be >= 1");
  int K = static_cast<int>(states.size());
  std::vector<double> wins(K, 0.0);
  std::vector<double> draw(K);
  for (int i = 0; i < samples; ++i) {
    for (int k = 0; k < K; ++k)
      draw[k] = rng.beta(states[k].total_s(), states[k].total_f());
    double best = draw[0];
    for (int k = 1; k < K; ++k)
      if (draw[k] > best) best = draw[k];
    int n_best = 0;
    for (int k = 0; k < K; ++k)
      if (draw[k] == best) ++n_best;
    double share = 1.0 / n_best;
    for (int k = 0; k < K; ++k)
      if (draw[k] == best) wins[k] += share;
  }
  double c = static_cast<double>(t) / (2.0 * T);
  std::vector<double> probs(K);
  double total = 0.0;
  for (int k = 0; k < K; ++k) {
    probs[k] = std::pow(wins[k] / samples, c);
    total += probs[k];
  }
  for (int k = 0; k < K; ++k) probs[k] /= total;
  return probs;
}

// Posterior mean plus the optimism bonus sqrt(2 log t / n); log t is clamped
// to zero for the first decision(s).
inline double ucb_index(const ArmState& x, int t) {
  double n = static_cast<double>(x.total_n());
  double tt = t > 1 ? static_cast<double>(t) : 1.0;
  return posterior_mean(x) + std::sqrt(2.0 * std::log(tt) / n);
}

// base + Z * (K/n): an exponentially perturbed index whose noise scale K/n
// fades as the arm accumulates observations. Consumes exactly one exponential
// draw per call.
inline double randomized_index(double base, int n, int K,
                               PerturbationParam param, Rng& rng) {
  if (n < 1 || K < 1) throw DomainError("randomized_index: need n >= 1, K >= 1");
  double mean = param == PerturbationParam::rate ? static_cast<double>(K)
                                                 : 1.0 / static_cast<double>(K);
  double z = rng.exponential(mean);
  return base + z * (static_cast<double>(K) / n);
}

namespace detail {

inline void score_with_table(const Policy& policy, const AllocationContext& ctx,
                             std::vector<double>& scores, bool perturb) {
  const auto& states = *ctx.states;
  int K = static_cast<int>(states.size());
  for (int k = 0; k < K; ++k) {
    const ArmState& x = states[k];
    double base;
    if (policy.kind == RuleKind::WI)
      base = policy.table->at(x.total_s(), x.total_f(), ctx.T - ctx.t);
    else if (policy.kind == RuleKind::RBI)
      base = posterior_mean(x);
    else
      base = policy.table->at(x.total_s(), x.total_f());
    scores[k] = perturb ? randomized_index(base, x.total_n(), K,
                                           policy.perturbation,
                                           *ctx.streams.perturbation)
                        : base;
  }
}

}  // namespace detail

// Every K-th patient (a deterministic cycle starting at t = 0) goes to the
// control arm 0; the rest follow the Gittins argmax over the experimental
// arms. One tie-break uniform is consumed on every call, control or not.
inline int cg_rule(const Policy& policy, const AllocationContext& ctx) {
  const auto& states = *ctx.states;
  int K = static_cast<int>(states.size());
  if (K < 2) throw ConfigError("cg_rule: requires at least two arms");
  if (!policy.table) throw ConfigError("cg_rule: requires an index table");
  bool to_control;
  if (policy.cg_schedule == ControlSchedule::cycle) {
    to_control = ctx.t % K == 0;
  } else {
    to_control = ctx.streams.allocation->uniform01() < 1.0 / K;
  }
  if (to_control) {
    ctx.streams.tie_break->uniform01();
    return 0;
  }
  std::vector<double> scores(K - 1);
  for (int k = 1; k < K; ++k)
    scores[k - 1] = policy.table->at(states[k].total_s(), states[k].total_f());
  return 1 + argmax_with_tiebreak(scores, *ctx.streams.tie_break);
}

// Dispatches one allocation decision. Stream usage per call is fixed given
// (rule, K, ts_samples): FR/CB/UCB/GI/WI use one tie-break uniform; RBI/RGI
// add K exponential perturbation draws; TS adds ts_samples*K Beta draws plus
// one allocation uniform; CG's randomized schedule adds one allocation
// uniform. (Beta draws use rejection sampling internally, so only their
// dedicated stream has a variable budget.)
inline int select_arm(const Policy& policy, const AllocationContext& ctx) {
  const auto& states = *ctx.states;
  int K = static_cast<int>(states.size());
  if (K < 1 || ctx.t < 0 || ctx.t >= ctx.T)
    throw ConfigError("select_arm: invalid context");
  if (K > 64) throw CapacityError("select_arm: more than 64 arms unsupported");
  std::vector<double> scores(K, 0.0);
  switch (policy.kind) {
    case RuleKind::FR:
      // All scores tied: the tie-break uniform picks uniformly among arms.
      break;
    case RuleKind::CB:
      for (int k = 0; k < K; ++k) scores[k] = posterior_mean(states[k]);
      break;
    case RuleKind::UCB:
      for (int k = 0; k < K; ++k) scores[k] = ucb_index(states[k], ctx.t);
      break;
    case RuleKind::TS: {
      std::vector<double> probs = thompson_probs(states, ctx.t, ctx.T,
                                                 policy.ts_samples,
                                                 *ctx.streams.ts_sampling);
      double u = ctx.streams.allocation->uniform01();
      double acc = 0.0;
      int pick = K - 1;
      for (int k = 0; k < K; ++k) {
        acc += probs[k];
        if (u < acc) {
          pick = k;
          break;
        }
      }
      ctx.streams.tie_break->uniform01();  // keep per-decision budgets fixed
      return pick;
    }
    case RuleKind::GI:
    case RuleKind::WI:
      if (!policy.table) throw ConfigError("select_arm: rule requires a table");
      detail::score_with_table(policy, ctx, scores, false);
      break;
    case RuleKind::RBI:
      detail::score_with_table(policy, ctx, scores, true);
      break;
    case RuleKind::RGI:
      if (!policy.table) throw ConfigError("select_arm: rule requires a table");
      detail::score_with_table(policy, ctx, scores, true);
      break;
    case RuleKind::CG:
      return cg_rule(policy, ctx);
  }
  return argmax_with_tiebreak(scores, *ctx.streams.tie_break);
}

}  // namespace mabt
