#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mabt/errors.hpp"
#include "mabt/policies.hpp"

namespace mabt {

// Rule-dependent policy settings as they appear in the scenario file. Only
// the keys meaningful for the chosen rule are accepted.
struct PolicySpec {
  RuleKind rule = RuleKind::FR;
  double discount = 0.99;    // GI, RGI, CG (default 0.99); WI (default 1.0)
  int truncation = 750;      // GI, RGI, CG; for WI 0 means "trial length"
  int ts_samples = 1024;     // TS
  PerturbationParam perturbation = PerturbationParam::rate;  // RBI, RGI
  ControlSchedule schedule = ControlSchedule::cycle;         // CG
};

struct TestSpec {
  enum class Kind { z_cutoff, fisher, fisher_adjusted };
  Kind kind = Kind::z_cutoff;
  double cutoff = 0.0;        // z-cutoff
  double alpha = 0.05;        // fisher: reject arm k iff (K-1)*p_k < alpha
  double target_alpha = 0.05; // fisher-adjusted: calibrated size target
};

inline const char* to_string(TestSpec::Kind k) {
  switch (k) {
    case TestSpec::Kind::z_cutoff: return "z-cutoff";
    case TestSpec::Kind::fisher: return "fisher";
    case TestSpec::Kind::fisher_adjusted: return "fisher-adjusted";
  }
  return "?";
}

struct Scenario {
  int K = 2;
  int T = 1;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> priors;  // (s, f) per arm
  std::vector<double> true_p;  // arm 0 is the control
  PolicySpec policy;
  TestSpec test;
  long replications = 1;
  std::uint64_t seed = 0;
  long calibration_replications = 10000;

  int max_prior_sum() const {
    int m = 0;
    for (const auto& [s, f] : priors) m = std::max(m, static_cast<int>(s + f));
    return m;
  }

  void validate() const {
    if (K < 1) throw ConfigError("scenario: K must be >= 1");
    if (T < 1) throw ConfigError("scenario: T must be >= 1");
    if (static_cast<int>(priors.size()) != K)
      throw ConfigError("scenario: priors must list exactly K arms");
    for (const auto& [s, f] : priors)
      if (s < 1 || f < 1)
        throw ConfigError("scenario: prior counts must be >= 1");
    if (static_cast<int>(true_p.size()) != K)
      throw ConfigError("scenario: true_p must list exactly K probabilities");
    for (double p : true_p)
      if (!(p >= 0.0 && p <= 1.0))
        throw ConfigError("scenario: true_p entries must lie in [0,1]");
    if (replications < 1) throw ConfigError("scenario: replications must be >= 1");
    if (calibration_replications < 1)
      throw ConfigError("scenario: calibration_replications must be >= 1");
    if (policy.rule == RuleKind::CG && K < 2)
      throw ConfigError("scenario: CG requires at least two arms");
    bool uses_table = policy.rule == RuleKind::GI || policy.rule == RuleKind::RGI ||
                      policy.rule == RuleKind::CG || policy.rule == RuleKind::WI;
    if (uses_table) {
      if (!(policy.discount > 0.0 && policy.discount <= 1.0))
        throw ConfigError("scenario: policy discount must lie in (0,1]");
      if (policy.truncation < 0)
        throw ConfigError("scenario: policy truncation must be >= 0");
    }
    if (policy.rule == RuleKind::TS && policy.ts_samples < 1)
      throw ConfigError("scenario: policy samples must be >= 1");
    if (test.kind == TestSpec::Kind::z_cutoff && !(test.cutoff >= 0.0))
      throw ConfigError("scenario: test cutoff must be >= 0");
    if (test.kind == TestSpec::Kind::fisher &&
        !(test.alpha >= 0.0 && test.alpha <= 1.0))
      throw ConfigError("scenario: test alpha must lie in [0,1]");
    if (test.kind == TestSpec::Kind::fisher_adjusted &&
        !(test.target_alpha >= 0.0 && test.target_alpha <= 1.0))
      throw ConfigError("scenario: test target_alpha must lie in [0,1]");
  }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j,
                                const std::set<std::string>& allowed,
                                const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& item : j.items())
    if (!allowed.count(item.key()))
      throw ConfigError(where + ": unknown field '" + item.key() + "'");
}

inline const nlohmann::json& require_field(const nlohmann::json& j,
                                           const std::string& key,
                                           const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(where + ": missing field '" + key + "'");
  return *it;
}

inline long get_int(const nlohmann::json& j, const std::string& key,
                    const std::string& where) {
  const auto& v = require_field(j, key, where);
  if (!v.is_number_integer())
    throw ConfigError(where + ": field '" + key + "' must be an integer");
  return v.get<long>();
}

inline double get_number(const nlohmann::json& j, const std::string& key,
                         const std::string& where) {
  const auto& v = require_field(j, key, where);
  if (!v.is_number())
    throw ConfigError(where + ": field '" + key + "' must be a number");
  return v.get<double>();
}

inline std::string get_string(const nlohmann::json& j, const std::string& key,
                              const std::string& where) {
  const auto& v = require_field(j, key, where);
  if (!v.is_string())
    throw ConfigError(where + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

inline PolicySpec policy_from_json(const nlohmann::json& j) {
  const std::string where = "scenario.policy";
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  PolicySpec p;
  p.rule = rule_from_string(get_string(j, "rule", where));
  std::set<std::string> allowed = {"rule"};
  switch (p.rule) {
    case RuleKind::GI:
    case RuleKind::RGI:
    case RuleKind::CG:
      allowed.insert("discount");
      allowed.insert("truncation");
      p.discount = 0.99;
      p.truncation = 750;
      break;
    case RuleKind::WI:
      allowed.insert("discount");
      allowed.insert("truncation");
      p.discount = 1.0;
      p.truncation = 0;  // resolved to the trial length
      break;
    default:
      break;
  }
  if (p.rule == RuleKind::RBI || p.rule == RuleKind::RGI)
    allowed.insert("perturbation");
  if (p.rule == RuleKind::TS) allowed.insert("samples");
  if (p.rule == RuleKind::CG) allowed.insert("schedule");
  reject_unknown_keys(j, allowed, where);
  if (j.contains("discount")) p.discount = get_number(j, "discount", where);
  if (j.contains("truncation"))
    p.truncation = static_cast<int>(get_int(j, "truncation", where));
  if (j.contains("samples"))
    p.ts_samples = static_cast<int>(get_int(j, "samples", where));
  if (j.contains("perturbation")) {
    std::string v = get_string(j, "perturbation", where);
    if (v == "rate") p.perturbation = PerturbationParam::rate;
    else if (v == "mean") p.perturbation = PerturbationParam::mean;
    else throw ConfigError(where + ": perturbation must be 'rate' or 'mean'");
  }
  if (j.contains("schedule")) {
    std::string v = get_string(j, "schedule", where);
    if (v == "cycle") p.schedule = ControlSchedule::cycle;
    else if (v == "randomized") p.schedule = ControlSchedule::randomized;
    else throw ConfigError(where + ": schedule must be 'cycle' or 'randomized'");
  }
  return p;
}

inline TestSpec test_from_json(const nlohmann::json& j) {
  const std::string where = "scenario.test";
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  TestSpec t;
  std::string kind = get_string(j, "kind", where);
  if (kind == "z-cutoff") {
    reject_unknown_keys(j, {"kind", "cutoff"}, where);
    t.kind = TestSpec::Kind::z_cutoff;
    t.cutoff = get_number(j, "cutoff", where);
  } else if (kind == "fisher") {
    reject_unknown_keys(j, {"kind", "alpha"}, where);
    t.kind = TestSpec::Kind::fisher;
    if (j.contains("alpha")) t.alpha = get_number(j, "alpha", where);
  } else if (kind == "fisher-adjusted") {
    reject_unknown_keys(j, {"kind", "target_alpha"}, where);
    t.kind = TestSpec::Kind::fisher_adjusted;
    t.target_alpha = get_number(j, "target_alpha", where);
  } else {
    throw ConfigError(where + ": kind must be 'z-cutoff', 'fisher', or 'fisher-adjusted'");
  }
  return t;
}

}  // namespace detail

inline Scenario scenario_from_json(const nlohmann::json& j) {
  const std::string where = "scenario";
  detail::reject_unknown_keys(
      j,
      {"K", "T", "priors", "true_p", "policy", "test", "replications", "seed",
       "calibration_replications"},
      where);
  Scenario sc;
  sc.K = static_cast<int>(detail::get_int(j, "K", where));
  sc.T = static_cast<int>(detail::get_int(j, "T", where));
  const auto& priors = detail::require_field(j, "priors", where);
  if (!priors.is_array())
    throw ConfigError(where + ": priors must be an array of [s,f] pairs");
  for (const auto& pr : priors) {
    if (!pr.is_array() || pr.size() != 2 || !pr[0].is_number_integer() ||
        !pr[1].is_number_integer())
      throw ConfigError(where + ": each prior must be an [s,f] integer pair");
    long s = pr[0].get<long>(), f = pr[1].get<long>();
    if (s < 1 || f < 1) throw ConfigError(where + ": prior counts must be >= 1");
    sc.priors.emplace_back(static_cast<std::uint32_t>(s),
                           static_cast<std::uint32_t>(f));
  }
  const auto& tp = detail::require_field(j, "true_p", where);
  if (!tp.is_array()) throw ConfigError(where + ": true_p must be an array");
  for (const auto& v : tp) {
    if (!v.is_number()) throw ConfigError(where + ": true_p entries must be numbers");
    sc.true_p.push_back(v.get<double>());
  }
  sc.policy = detail::policy_from_json(detail::require_field(j, "policy", where));
  sc.test = detail::test_from_json(detail::require_field(j, "test", where));
  sc.replications = detail::get_int(j, "replications", where);
  const auto& seed = detail::require_field(j, "seed", where);
  if (!seed.is_number_integer() ||
      (seed.is_number_integer() && !seed.is_number_unsigned() && seed.get<long long>() < 0))
    throw ConfigError(where + ": seed must be a non-negative integer");
  sc.seed = seed.get<std::uint64_t>();
  if (j.contains("calibration_replications"))
    sc.calibration_replications =
        detail::get_int(j, "calibration_replications", where);
  sc.validate();
  return sc;
}

// Canonical echo of a parsed scenario; feeds the provenance config hash.
inline nlohmann::json scenario_to_json(const Scenario& sc) {
  nlohmann::json j;
  j["K"] = sc.K;
  j["T"] = sc.T;
  auto priors = nlohmann::json::array();
  for (const auto& [s, f] : sc.priors) priors.push_back({s, f});
  j["priors"] = priors;
  j["true_p"] = sc.true_p;
  nlohmann::json pol;
  pol["rule"] = to_string(sc.policy.rule);
  switch (sc.policy.rule) {
    case RuleKind::GI:
    case RuleKind::RGI:
    case RuleKind::CG:
    case RuleKind::WI:
      pol["discount"] = sc.policy.discount;
      pol["truncation"] = sc.policy.truncation;
      break;
    default:
      break;
  }
  if (sc.policy.rule == RuleKind::TS) pol["samples"] = sc.policy.ts_samples;
  if (sc.policy.rule == RuleKind::RBI || sc.policy.rule == RuleKind::RGI)
    pol["perturbation"] =
        sc.policy.perturbation == PerturbationParam::rate ? "rate" : "mean";
  if (sc.policy.rule == RuleKind::CG)
    pol["schedule"] =
        sc.policy.schedule == ControlSchedule::cycle ? "cycle" : "randomized";
  j["policy"] = pol;
  nlohmann::json test;
  test["kind"] = to_string(sc.test.kind);
  if (sc.test.kind == TestSpec::Kind::z_cutoff) test["cutoff"] = sc.test.cutoff;
  if (sc.test.kind == TestSpec::Kind::fisher) test["alpha"] = sc.test.alpha;
  if (sc.test.kind == TestSpec::Kind::fisher_adjusted)
    test["target_alpha"] = sc.test.target_alpha;
  j["test"] = test;
  j["replications"] = sc.replications;
  j["seed"] = sc.seed;
  j["calibration_replications"] = sc.calibration_replications;
  return j;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scenario file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("scenario parse error: ") + e.what());
  }
  return scenario_from_json(j);
}

}  // namespace mabt
