#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mabt/arm_state.hpp"
#include "mabt/errors.hpp"
#include "mabt/index_table.hpp"
#include "mabt/parallel.hpp"
#include "mabt/policies.hpp"
#include "mabt/rng.hpp"
#include "mabt/scenario.hpp"
#include "mabt/stat_tests.hpp"
#include "mabt/version.hpp"

namespace mabt {

struct TrialRecord {
  std::vector<int> allocations;       // arm id per patient
  std::vector<std::uint8_t> outcomes; // 1 = success
  std::vector<long> n, s;             // final per-arm totals (observed only)
};

struct BiasBin {
  int lo = 0, hi = 0;  // final n_k in [lo, hi)
  long count = 0;
  double bias = 0.0;  // mean of s_k/n_k - p_k over the bin
};

struct ArmBias {
  long excluded = 0;  // replications with n_k = 0
  std::vector<BiasBin> bins;
};

struct Metrics {
  Scenario scenario;
  double threshold = std::numeric_limits<double>::quiet_NaN();  // fisher-adjusted
  double rejection_rate = 0.0;
  double rejection_rate_se = std::numeric_limits<double>::quiet_NaN();
  double p_star = 0.0;  // share of patients on the best arm (arm 0 under ties)
  double p_star_se = std::numeric_limits<double>::quiet_NaN();
  double ens = 0.0;
  double ens_se = std::numeric_limits<double>::quiet_NaN();
  double regret = 0.0;
  double wrong_choice = std::numeric_limits<double>::quiet_NaN();  // needs a unique best arm
  std::vector<double> mean_n;
  std::vector<double> mle_mean, mle_var;  // conditional on n_k > 0
  std::vector<long> mle_excluded;
  std::vector<ArmBias> bias;
};

struct ExperimentOptions {
  int threads = 1;
  int bias_bin_width = 5;
  enum class PowerRule { any_effective, best_only };
  PowerRule power_rule = PowerRule::any_effective;
  std::shared_ptr<const IndexTable> table;  // pre-built table to share across runs
};

inline std::string scenario_config_hash(const Scenario& sc) {
  return hash_hex(fnv1a64(scenario_to_json(sc).dump()));
}

// Builds the index table the scenario's policy needs (nullptr for table-free
// rules), sized so that every state reachable in the trial is covered.
inline std::shared_ptr<const IndexTable> build_policy_table(const Scenario& sc,
                                                            int threads) {
  const PolicySpec& ps = sc.policy;
  IndexConfig cfg;
  cfg.tolerance = 1e-6;
  int need_n = sc.max_prior_sum() + sc.T - 1;
  switch (ps.rule) {
    case RuleKind::GI:
    case RuleKind::RGI:
    case RuleKind::CG: {
      cfg.mode = IndexMode::infinite_gittins;
      cfg.discount = ps.discount;
      cfg.truncation_horizon = ps.truncation;
      auto t = std::make_shared<IndexTable>(IndexTable::build(cfg, need_n, threads));
      return t;
    }
    case RuleKind::WI: {
      cfg.mode = IndexMode::finite_whittle;
      cfg.discount = ps.discount;
      cfg.truncation_horizon = ps.truncation > 0 ? ps.truncation : sc.T;
      std::vector<FiniteTableRequest> reqs;
      reqs.reserve(sc.T);
      for (int r = 1; r <= sc.T; ++r)
        reqs.push_back({r, sc.max_prior_sum() + (sc.T - r)});
      auto t = std::make_shared<IndexTable>(IndexTable::build(cfg, reqs, threads));
      return t;
    }
    default:
      return nullptr;
  }
}

inline Policy make_policy(const Scenario& sc,
                          std::shared_ptr<const IndexTable> table,
                          int threads) {
  Policy p;
  p.kind = sc.policy.rule;
  p.ts_samples = sc.policy.ts_samples;
  p.perturbation = sc.policy.perturbation;
  p.cg_schedule = sc.policy.schedule;
  if (p.needs_infinite_table() || p.needs_finite_table()) {
    if (!table) table = build_policy_table(sc, threads);
    p.table = std::move(table);
  }
  p.validate(sc.K, sc.T, sc.max_prior_sum());
  return p;
}

namespace detail {

struct RepSummary {
  std::vector<std::uint32_t> n, s;  // observed counts per arm
};

inline std::vector<ArmState> initial_states(const Scenario& sc) {
  std::vector<ArmState> states;
  states.reserve(sc.K);
  for (const auto& [s, f] : sc.priors) states.push_back(ArmState{s, f, 0, 0});
  return states;
}

// One simulated trial. The replication stream fans out into fixed-purpose
// component streams so no component's draw count can shift another's sequence.
template <typename Recorder>
std::vector<ArmState> play_trial(const Scenario& sc, const Policy& policy,
                                 const Rng& rep_rng, Recorder&& record) {
  Rng alloc = rep_rng.derive(stream::kAllocation);
  Rng tie = rep_rng.derive(stream::kTieBreak);
  Rng ts = rep_rng.derive(stream::kTsSampling);
  Rng pert = rep_rng.derive(stream::kPerturbation);
  Rng outcome_rng = rep_rng.derive(stream::kOutcome);
  std::vector<ArmState> states = initial_states(sc);
  AllocationContext ctx;
  ctx.T = sc.T;
  ctx.states = &states;
  ctx.streams.allocation = &alloc;
  ctx.streams.tie_break = &tie;
  ctx.streams.ts_sampling = &ts;
  ctx.streams.perturbation = &pert;
  for (int t = 0; t < sc.T; ++t) {
    ctx.t = t;
    int a = select_arm(policy, ctx);
    Outcome o = sample_outcome(outcome_rng, sc.true_p[a]);
    states[a] = apply_outcome(states[a], o);
    record(t, a, o.success);
  }
  return states;
}

inline RepSummary run_rep(const Scenario& sc, const Policy& policy,
                          const Rng& rep_rng) {
  auto states = play_trial(sc, policy, rep_rng, [](int, int, bool) {});
  RepSummary r;
  r.n.resize(sc.K);
  r.s.resize(sc.K);
  for (int k = 0; k < sc.K; ++k) {
    r.n[k] = states[k].obs_s + states[k].obs_f;
    r.s[k] = states[k].obs_s;
  }
  return r;
}

// Per-arm rejection decision against the control, applying the Bonferroni
// factor (K-1) to Fisher p-values.
inline bool arm_rejected(const Scenario& sc, const RepSummary& r, int k,
                         double threshold) {
  switch (sc.test.kind) {
    case TestSpec::Kind::z_cutoff:
      return z_test(r.s[k], r.n[k], r.s[0], r.n[0], sc.test.cutoff);
    case TestSpec::Kind::fisher: {
      double p = fisher_exact_pvalue(r.s[k], r.n[k], r.s[0], r.n[0]);
      return std::min(1.0, (sc.K - 1) * p) < sc.test.alpha;
    }
    case TestSpec::Kind::fisher_adjusted: {
      double p = fisher_exact_pvalue(r.s[k], r.n[k], r.s[0], r.n[0]);
      return std::min(1.0, (sc.K - 1) * p) <= threshold;
    }
  }
  return false;
}

inline int best_arm(const std::vector<double>& true_p) {
  int best = 0;
  for (int k = 1; k < static_cast<int>(true_p.size()); ++k)
    if (true_p[k] > true_p[best]) best = k;
  return best;
}

inline bool unique_best(const std::vector<double>& true_p) {
  double mx = *std::max_element(true_p.begin(), true_p.end());
  int c = 0;
  for (double p : true_p)
    if (p == mx) ++c;
  return c == 1;
}

}  // namespace detail

inline TrialRecord run_trial(const Scenario& sc, const Policy& policy,
                             const Rng& rep_rng) {
  TrialRecord rec;
  rec.allocations.reserve(sc.T);
  rec.outcomes.reserve(sc.T);
  rec.n.assign(sc.K, 0);
  rec.s.assign(sc.K, 0);
  detail::play_trial(sc, policy, rep_rng, [&](int, int a, bool y) {
    rec.allocations.push_back(a);
    rec.outcomes.push_back(y ? 1 : 0);
    rec.n[a] += 1;
    if (y) rec.s[a] += 1;
  });
  return rec;
}

// Calibrates the adjusted-Fisher rejection threshold: simulate the design
// under the global null (every arm at the control response rate) on the
// calibration stream, take each replication's smallest Bonferroni-scaled
// p-value, and return the largest threshold whose empirical rejection rate
// stays at or below the target size.
inline double calibrate_cutoff(const Scenario& sc, const Policy& policy,
                               int threads = 1) {
  if (sc.test.kind != TestSpec::Kind::fisher_adjusted)
    throw ConfigError("calibrate_cutoff: scenario's test is not fisher-adjusted");
  Scenario h0 = sc;
  std::fill(h0.true_p.begin(), h0.true_p.end(), sc.true_p[0]);
  const long R = sc.calibration_replications;
  std::vector<double> q(R);
  Rng base = Rng(sc.seed).derive(stream::kCalibration);
  parallel_for(static_cast<std::size_t>(R), threads, [&](std::size_t r) {
    auto rep = detail::run_rep(h0, policy, base.derive(r));
    double worst = 1.0;
    for (int k = 1; k < sc.K; ++k) {
      double p = fisher_exact_pvalue(rep.s[k], rep.n[k], rep.s[0], rep.n[0]);
      worst = std::min(worst, std::min(1.0, (sc.K - 1) * p));
    }
    q[r] = worst;
  });
  std::sort(q.begin(), q.end());
  double threshold = 0.0;
  for (long i = 0; i < R;) {
    long j = i;
    while (j < R && q[j] == q[i]) ++j;
    if (static_cast<double>(j) / R <= sc.test.target_alpha)
      threshold = q[i];
    else
      break;
    i = j;
  }
  return threshold;
}

inline Metrics run_experiment(const Scenario& sc,
                              const ExperimentOptions& opts = {}) {
  sc.validate();
  Policy policy = make_policy(sc, opts.table, opts.threads);
  Metrics m;
  m.scenario = sc;
  if (sc.test.kind == TestSpec::Kind::fisher_adjusted)
    m.threshold = calibrate_cutoff(sc, policy, opts.threads);

  const long R = sc.replications;
  const int K = sc.K, T = sc.T;
  std::vector<detail::RepSummary> reps(R);
  Rng base = Rng(sc.seed).derive(stream::kEvaluation);
  parallel_for(static_cast<std::size_t>(R), opts.threads, [&](std::size_t r) {
    reps[r] = detail::run_rep(sc, policy, base.derive(r));
  });

  const int best = detail::best_arm(sc.true_p);
  const bool has_unique_best = detail::unique_best(sc.true_p);
  std::vector<int> power_arms;
  for (int k = 1; k < K; ++k)
    if (sc.true_p[k] > sc.true_p[0]) power_arms.push_back(k);
  if (power_arms.empty()) {
    for (int k = 1; k < K; ++k) power_arms.push_back(k);  // size under the null
  } else if (opts.power_rule == ExperimentOptions::PowerRule::best_only) {
    power_arms.assign(1, best);
  }

  double sum_rej = 0.0;
  double sum_ps = 0.0, sumsq_ps = 0.0;
  double sum_ens = 0.0, sumsq_ens = 0.0;
  long wrong = 0;
  std::vector<double> sum_n(K, 0.0);
  std::vector<double> mle_sum(K, 0.0), mle_sumsq(K, 0.0);
  std::vector<long> mle_cnt(K, 0);
  if (opts.bias_bin_width < 1)
    throw ConfigError("run_experiment: bias bin width must be >= 1");
  const int w = opts.bias_bin_width;
  std::vector<std::map<int, std::pair<long, double>>> bin_acc(K);
  std::vector<long> excluded(K, 0);

  for (long r = 0; r < R; ++r) {
    const auto& rep = reps[r];
    bool rejected = false;
    for (int k : power_arms)
      if (detail::arm_rejected(sc, rep, k, m.threshold)) {
        rejected = true;
        break;
      }
    sum_rej += rejected ? 1.0 : 0.0;
    double ps = static_cast<double>(rep.n[best]) / T;
    sum_ps += ps;
    sumsq_ps += ps * ps;
    double succ = 0.0;
    for (int k = 0; k < K; ++k) succ += rep.s[k];
    sum_ens += succ;
    sumsq_ens += succ * succ;
    if (has_unique_best) {
      bool strictly_largest = true;
      for (int k = 0; k < K; ++k)
        if (k != best && rep.n[k] >= rep.n[best]) {
          strictly_largest = false;
          break;
        }
      if (!strictly_largest) ++wrong;
    }
    for (int k = 0; k < K; ++k) {
      sum_n[k] += rep.n[k];
      if (rep.n[k] == 0) {
        ++excluded[k];
        continue;
      }
      double mle = static_cast<double>(rep.s[k]) / rep.n[k];
      mle_sum[k] += mle;
      mle_sumsq[k] += mle * mle;
      ++mle_cnt[k];
      auto& cell = bin_acc[k][static_cast<int>(rep.n[k]) / w];
      cell.first += 1;
      cell.second += mle - sc.true_p[k];
    }
  }

  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto sample_sd = [](double sum, double sumsq, long n) {
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    double var = (sumsq - sum * sum / n) / (n - 1);
    return std::sqrt(std::max(0.0, var));
  };
  m.rejection_rate = sum_rej / R;
  m.rejection_rate_se =
      R > 1 ? std::sqrt(m.rejection_rate * (1.0 - m.rejection_rate) / R) : nan;
  m.p_star = sum_ps / R;
  m.p_star_se = sample_sd(sum_ps, sumsq_ps, R);
  m.ens = sum_ens / R;
  m.ens_se = sample_sd(sum_ens, sumsq_ens, R);
  double ub = T * *std::max_element(sc.true_p.begin(), sc.true_p.end());
  m.regret = ub - m.ens;
  m.wrong_choice = has_unique_best ? static_cast<double>(wrong) / R : nan;
  m.mean_n.resize(K);
  m.mle_mean.assign(K, nan);
  m.mle_var.assign(K, nan);
  m.mle_excluded.assign(K, 0);
  m.bias.resize(K);
  for (int k = 0; k < K; ++k) {
    m.mean_n[k] = sum_n[k] / R;
    if (mle_cnt[k] > 0) m.mle_mean[k] = mle_sum[k] / mle_cnt[k];
    if (mle_cnt[k] > 1)
      m.mle_var[k] = std::max(
          0.0, (mle_sumsq[k] - mle_sum[k] * mle_sum[k] / mle_cnt[k]) /
                   (mle_cnt[k] - 1));
    m.mle_excluded[k] = excluded[k];
    m.bias[k].excluded = excluded[k];
    for (const auto& [bin, cell] : bin_acc[k])
      m.bias[k].bins.push_back(
          {bin * w, bin * w + w, cell.first, cell.second / cell.first});
  }
  return m;
}

namespace detail {

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline std::string field_or_empty(double v) {
  return std::isnan(v) ? std::string() : fixed6(v);
}

inline void write_provenance(std::ofstream& out, const Scenario& sc) {
  out << "# mabt " << kVersion << "\n";
  out << "# config-hash: " << scenario_config_hash(sc) << "\n";
  out << "# seed: " << sc.seed << "\n";
}

}  // namespace detail

inline void write_results_csv(const Metrics& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open results file for writing: " + path);
  const Scenario& sc = m.scenario;
  detail::write_provenance(out, sc);
  if (!std::isnan(m.threshold))
    out << "# threshold: " << detail::fixed6(m.threshold) << "\n";
  out << "rule,alpha_or_power,se,p_star,p_star_se,ens,ens_se,regret,wrong_choice";
  for (int k = 0; k < sc.K; ++k) out << ",mean_n_" << k;
  out << "\n";
  out << to_string(sc.policy.rule) << ',' << detail::fixed6(m.rejection_rate)
      << ',' << detail::field_or_empty(m.rejection_rate_se) << ','
      << detail::fixed6(m.p_star) << ',' << detail::field_or_empty(m.p_star_se)
      << ',' << detail::fixed6(m.ens) << ',' << detail::field_or_empty(m.ens_se)
      << ',' << detail::fixed6(m.regret) << ','
      << detail::field_or_empty(m.wrong_choice);
  for (int k = 0; k < sc.K; ++k) out << ',' << detail::fixed6(m.mean_n[k]);
  out << "\n";
  if (!out) throw IoError("failed writing results file: " + path);
}

inline void write_bias_csv(const Metrics& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open bias file for writing: " + path);
  detail::write_provenance(out, m.scenario);
  out << "arm,bin_lo,bin_hi,count,bias\n";
  for (int k = 0; k < m.scenario.K; ++k) {
    // Sentinel row [0,0) carries the count of replications with n_k = 0.
    out << k << ",0,0," << m.bias[k].excluded << ",\n";
    for (const auto& b : m.bias[k].bins)
      out << k << ',' << b.lo << ',' << b.hi << ',' << b.count << ','
          << detail::fixed6(b.bias) << "\n";
  }
  if (!out) throw IoError("failed writing bias file: " + path);
}

}  // namespace mabt
