#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "mabt/calibration.hpp"
#include "mabt/errors.hpp"
#include "mabt/parallel.hpp"

namespace mabt {

// One finite-mode sub-table request: all cells with total_s + total_f <= max_n
// for the given remaining horizon.
struct FiniteTableRequest {
  int remaining = 1;
  int max_n = 2;
};

// Materialized index values on the triangle {s >= 1, f >= 1, s + f <= max_n},
// one sub-table per remaining horizon in finite mode. Values are stored at
// full double precision; files round to 6 decimals.
class IndexTable {
 public:
  IndexTable() = default;

  const IndexConfig& config() const { return cfg_; }
  IndexMode mode() const { return cfg_.mode; }

  // Infinite mode: the single max_n. Finite mode: the largest sub-table max_n.
  int max_n() const {
    int m = 0;
    for (const auto& sub : subs_) m = std::max(m, sub.max_n);
    return m;
  }

  // Sorted remaining values (empty in infinite mode).
  std::vector<int> remaining_values() const {
    std::vector<int> out;
    if (cfg_.mode != IndexMode::finite_whittle) return out;
    out.reserve(subs_.size());
    for (const auto& sub : subs_) out.push_back(sub.remaining);
    return out;
  }

  // Per-remaining coverage bound (remaining = 0 queries the infinite table).
  int max_n_at(int remaining) const {
    const Sub* sub = find(remaining);
    return sub ? sub->max_n : 0;
  }

  bool has(int s, int f) const {
    const Sub* sub = find(0);
    return sub && in_range(*sub, s, f);
  }
  bool has(int s, int f, int remaining) const {
    const Sub* sub = find(remaining);
    return sub && in_range(*sub, s, f);
  }

  // Infinite-mode lookup.
  double at(int s, int f) const {
    if (cfg_.mode != IndexMode::infinite_gittins)
      throw ConfigError("IndexTable: two-argument lookup requires infinite mode");
    const Sub* sub = find(0);
    if (!sub || !in_range(*sub, s, f))
      throw ConfigError("IndexTable: state (" + std::to_string(s) + "," +
                        std::to_string(f) + ") outside table coverage");
    return sub->values[tri_offset(s, f)];
  }

  // Finite-mode lookup.
  double at(int s, int f, int remaining) const {
    if (cfg_.mode != IndexMode::finite_whittle)
      throw ConfigError("IndexTable: three-argument lookup requires finite mode");
    const Sub* sub = find(remaining);
    if (!sub)
      throw ConfigError("IndexTable: remaining = " + std::to_string(remaining) +
                        " not covered by table");
    if (!in_range(*sub, s, f))
      throw ConfigError("IndexTable: state (" + std::to_string(s) + "," +
                        std::to_string(f) + ") outside coverage at remaining = " +
                        std::to_string(remaining));
    return sub->values[tri_offset(s, f)];
  }

  // Checks strict monotonicity (increasing in s, decreasing in f) over every
  // stored sub-table; returns descriptions of violations, empty when clean.
  std::vector<std::string> monotonicity_violations() const {
    std::vector<std::string> out;
    for (const auto& sub : subs_) {
      for (int m = 2; m <= sub.max_n; ++m) {
        for (int s = 1; s < m; ++s) {
          int f = m - s;
          double v = sub.values[tri_offset(s, f)];
          if (s + 1 + f <= sub.max_n) {
            double right = sub.values[tri_offset(s + 1, f)];
            if (!(right > v))
              out.push_back(cell_name(s + 1, f, sub.remaining) +
                            " not greater than " + cell_name(s, f, sub.remaining));
          }
          if (s + f + 1 <= sub.max_n) {
            double below = sub.values[tri_offset(s, f + 1)];
            if (!(below < v))
              out.push_back(cell_name(s, f + 1, sub.remaining) + " not less than " +
                            cell_name(s, f, sub.remaining));
          }
        }
      }
    }
    return out;
  }

  // Visits every entry as (s, f, remaining, value); remaining = 0 in infinite
  // mode. Iteration order is deterministic: sub-tables by remaining, cells by
  // diagonal then s.
  template <typename F>
  void for_each(F&& f) const {
    for (const auto& sub : subs_) {
      for (int m = 2; m <= sub.max_n; ++m)
        for (int s = 1; s < m; ++s) f(s, m - s, sub.remaining, sub.values[tri_offset(s, m - s)]);
    }
  }

  static IndexTable build(const IndexConfig& cfg, int max_n, int threads);
  static IndexTable build(const IndexConfig& cfg,
                          const std::vector<FiniteTableRequest>& requests,
                          int threads);
  // Assembles a table from parsed entries (used by the CSV reader).
  static IndexTable from_entries(
      const IndexConfig& cfg,
      const std::vector<std::pair<FiniteTableRequest, std::vector<double>>>& subs);

 private:
  struct Sub {
    int remaining = 0;  // 0 in infinite mode
    int max_n = 0;
    std::vector<double> values;  // triangular, diagonal-major
  };

  static std::size_t tri_offset(int s, int f) {
    int m = s + f;
    return static_cast<std::size_t>(m - 1) * (m - 2) / 2 + (s - 1);
  }
  static std::size_t tri_size(int max_n) {
    return static_cast<std::size_t>(max_n) * (max_n - 1) / 2;
  }
  static bool in_range(const Sub& sub, int s, int f) {
    return s >= 1 && f >= 1 && s + f <= sub.max_n;
  }
  static std::string cell_name(int s, int f, int remaining) {
    std::string n = "(" + std::to_string(s) + "," + std::to_string(f);
    if (remaining > 0) n += ",r=" + std::to_string(remaining);
    return n + ")";
  }

  const Sub* find(int remaining) const {
    auto it = std::lower_bound(subs_.begin(), subs_.end(), remaining,
                               [](const Sub& a, int r) { return a.remaining < r; });
    if (it == subs_.end() || it->remaining != remaining) return nullptr;
    return &*it;
  }

  // Fills one sub-table; `steps_for` maps a diagonal total m to the DP depth.
  template <typename StepsFn>
  static void fill_sub(Sub& sub, double d, double tol, int threads,
                       StepsFn&& steps_for) {
    sub.values.assign(tri_size(sub.max_n), 0.0);
    double pad = 4.0 * tol;
    for (int m = 2; m <= sub.max_n; ++m) {
      int cells = m - 1;
      int steps = steps_for(m);
      // Cost heuristic: only spin up threads when the diagonal is worth it.
      bool parallel = threads > 1 &&
                      static_cast<double>(cells) * steps * steps > 4e6;
      auto solve_cell = [&](std::size_t idx) {
        int s = static_cast<int>(idx) + 1;
        int f = m - s;
        double mean = static_cast<double>(s) / m;
        if (steps == 1) {
          sub.values[tri_offset(s, f)] = mean;
          return;
        }
        thread_local detail::CalibrationWorkspace ws;
        double lo = std::max(0.0, mean - pad);
        double hi = 1.0;
        if (f >= 2) {
          // Warm upper bracket from the already-finished (s, f-1) cell; the
          // index decreases in f, so it bounds this cell from above. Verify
          // the sign with one evaluation and fall back to 1 if numerics
          // disagree.
          double cand = std::min(1.0, sub.values[tri_offset(s, f - 1)] + pad);
          if (cand > lo) {
            auto b = ws.branches(s, f, cand, steps, d);
            if (b.known - b.risky >= 0.0) hi = cand;
          }
        }
        sub.values[tri_offset(s, f)] =
            detail::bisect_index(ws, s, f, steps, d, tol, lo, hi);
      };
      parallel_for(static_cast<std::size_t>(cells), parallel ? threads : 1,
                   solve_cell);
    }
  }

  IndexConfig cfg_;
  std::vector<Sub> subs_;  // sorted by remaining
};

inline IndexTable IndexTable::build(const IndexConfig& cfg, int max_n, int threads) {
  cfg.validate();
  if (cfg.mode != IndexMode::infinite_gittins)
    throw ConfigError("build_table: finite mode requires per-remaining requests");
  if (max_n < 2) throw ConfigError("build_table: max_n must be >= 2");
  if (max_n > cfg.truncation_horizon - 1)
    throw ConfigError("build_table: max_n must be <= truncation_horizon - 1");
  IndexTable t;
  t.cfg_ = cfg;
  t.subs_.resize(1);
  Sub& sub = t.subs_[0];
  sub.remaining = 0;
  sub.max_n = max_n;
  int T = cfg.truncation_horizon;
  fill_sub(sub, cfg.discount, cfg.tolerance, threads,
           [T](int m) { return T - m; });
  return t;
}

inline IndexTable IndexTable::build(const IndexConfig& cfg,
                                    const std::vector<FiniteTableRequest>& requests,
                                    int threads) {
  cfg.validate();
  if (cfg.mode != IndexMode::finite_whittle)
    throw ConfigError("build_table: infinite mode takes a single max_n");
  if (requests.empty()) throw ConfigError("build_table: no remaining values requested");
  IndexTable t;
  t.cfg_ = cfg;
  for (const auto& req : requests) {
    if (req.max_n < 2) throw ConfigError("build_table: max_n must be >= 2");
    if (req.remaining < 1 || req.remaining > cfg.truncation_horizon)
      throw ConfigError("build_table: remaining must lie in [1, truncation_horizon]");
    Sub sub;
    sub.remaining = req.remaining;
    sub.max_n = req.max_n;
    t.subs_.push_back(std::move(sub));
  }
  std::sort(t.subs_.begin(), t.subs_.end(),
            [](const Sub& a, const Sub& b) { return a.remaining < b.remaining; });
  for (std::size_t i = 1; i < t.subs_.size(); ++i)
    if (t.subs_[i].remaining == t.subs_[i - 1].remaining)
      throw ConfigError("build_table: duplicate remaining value");
  for (auto& sub : t.subs_) {
    int r = sub.remaining;
    fill_sub(sub, cfg.discount, cfg.tolerance, threads, [r](int) { return r; });
  }
  return t;
}

inline IndexTable IndexTable::from_entries(
    const IndexConfig& cfg,
    const std::vector<std::pair<FiniteTableRequest, std::vector<double>>>& subs) {
  IndexTable t;
  t.cfg_ = cfg;
  for (const auto& [req, values] : subs) {
    Sub sub;
    sub.remaining = req.remaining;
    sub.max_n = req.max_n;
    sub.values = values;
    if (sub.values.size() != tri_size(sub.max_n))
      throw IoError("IndexTable: entry count does not form a full triangle");
    t.subs_.push_back(std::move(sub));
  }
  std::sort(t.subs_.begin(), t.subs_.end(),
            [](const Sub& a, const Sub& b) { return a.remaining < b.remaining; });
  return t;
}

// Builds the full triangle of Gittins indices: cells (s, f) with s, f >= 1 and
// s + f <= max_n.
inline IndexTable build_table(const IndexConfig& cfg, int max_n, int threads = 1) {
  return IndexTable::build(cfg, max_n, threads);
}

// Builds finite-horizon sub-tables, one per requested remaining value.
inline IndexTable build_table(const IndexConfig& cfg,
                              const std::vector<FiniteTableRequest>& requests,
                              int threads = 1) {
  return IndexTable::build(cfg, requests, threads);
}

}  // namespace mabt
