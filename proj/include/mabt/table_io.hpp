#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mabt/errors.hpp"
#include "mabt/index_table.hpp"
#include "mabt/version.hpp"

namespace mabt {

inline nlohmann::json index_config_json(const IndexConfig& cfg) {
  return nlohmann::json{{"mode", to_string(cfg.mode)},
                        {"discount", cfg.discount},
                        {"truncation_horizon", cfg.truncation_horizon},
                        {"tolerance", cfg.tolerance}};
}

inline IndexConfig index_config_from_json(const nlohmann::json& j) {
  IndexConfig cfg;
  std::string mode = j.at("mode").get<std::string>();
  if (mode == "infinite-gittins")
    cfg.mode = IndexMode::infinite_gittins;
  else if (mode == "finite-whittle")
    cfg.mode = IndexMode::finite_whittle;
  else
    throw IoError("index table sidecar: unknown mode '" + mode + "'");
  cfg.discount = j.at("discount").get<double>();
  cfg.truncation_horizon = j.at("truncation_horizon").get<int>();
  cfg.tolerance = j.at("tolerance").get<double>();
  cfg.validate();
  return cfg;
}

inline std::string table_config_hash(const IndexTable& t) {
  nlohmann::json j = index_config_json(t.config());
  nlohmann::json tables = nlohmann::json::array();
  if (t.mode() == IndexMode::finite_whittle) {
    for (int r : t.remaining_values())
      tables.push_back({{"remaining", r}, {"max_n", t.max_n_at(r)}});
  } else {
    tables.push_back({{"remaining", nullptr}, {"max_n", t.max_n()}});
  }
  j["tables"] = tables;
  return hash_hex(fnv1a64(j.dump()));
}

// Writes `path` (CSV, 6-decimal values) and `path`.json (config sidecar).
// Output is deterministic: reruns with the same table are byte-identical.
inline void write_table(const IndexTable& t, const std::string& path) {
  std::string hash = table_config_hash(t);
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "# mabt " << kVersion << "\n";
    out << "# config-hash: " << hash << "\n";
    out << "s,f,remaining,index\n";
    char buf[64];
    t.for_each([&](int s, int f, int remaining, double v) {
      if (remaining > 0)
        std::snprintf(buf, sizeof buf, "%d,%d,%d,%.6f", s, f, remaining, v);
      else
        std::snprintf(buf, sizeof buf, "%d,%d,,%.6f", s, f, v);
      out << buf << "\n";
    });
    if (!out) throw IoError("failed writing '" + path + "'");
  }
  {
    nlohmann::json side = index_config_json(t.config());
    nlohmann::json tables = nlohmann::json::array();
    if (t.mode() == IndexMode::finite_whittle) {
      for (int r : t.remaining_values())
        tables.push_back({{"remaining", r}, {"max_n", t.max_n_at(r)}});
    } else {
      tables.push_back({{"remaining", nullptr}, {"max_n", t.max_n()}});
    }
    side["tables"] = tables;
    side["tool_version"] = kVersion;
    side["config_hash"] = hash;
    std::ofstream out(path + ".json", std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + ".json' for writing");
    out << side.dump(2) << "\n";
  }
}

// Reads a table written by write_table. Requires the sidecar `path`.json.
inline IndexTable read_table(const std::string& path) {
  nlohmann::json side;
  {
    std::ifstream in(path + ".json");
    if (!in) throw IoError("missing sidecar '" + path + ".json'");
    try {
      in >> side;
    } catch (const nlohmann::json::exception& e) {
      throw IoError("bad sidecar '" + path + ".json': " + e.what());
    }
  }
  IndexConfig cfg = index_config_from_json(side);

  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  bool saw_header = false;
  // remaining -> (max observed diagonal, cell map)
  std::map<int, std::map<std::pair<int, int>, double>> cells;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!saw_header) {
      if (line != "s,f,remaining,index")
        throw IoError(path + ": expected header 's,f,remaining,index'");
      saw_header = true;
      continue;
    }
    std::istringstream row(line);
    std::string field;
    int vals[2];
    for (int i = 0; i < 2; ++i) {
      if (!std::getline(row, field, ','))
        throw IoError(path + ":" + std::to_string(lineno) + ": short row");
      vals[i] = std::stoi(field);
    }
    if (!std::getline(row, field, ','))
      throw IoError(path + ":" + std::to_string(lineno) + ": short row");
    int remaining = field.empty() ? 0 : std::stoi(field);
    if (!std::getline(row, field))
      throw IoError(path + ":" + std::to_string(lineno) + ": missing index value");
    double v = std::stod(field);
    if ((remaining == 0) != (cfg.mode == IndexMode::infinite_gittins))
      throw IoError(path + ":" + std::to_string(lineno) +
                    ": remaining column inconsistent with sidecar mode");
    cells[remaining][{vals[0] + vals[1], vals[0]}] = v;
  }
  if (!saw_header) throw IoError(path + ": no header found");

  std::vector<std::pair<FiniteTableRequest, std::vector<double>>> subs;
  for (auto& [remaining, grid] : cells) {
    int max_n = 0;
    for (const auto& [key, v] : grid) max_n = std::max(max_n, key.first);
    std::vector<double> values;
    values.reserve(grid.size());
    for (int m = 2; m <= max_n; ++m)
      for (int s = 1; s < m; ++s) {
        auto it = grid.find({m, s});
        if (it == grid.end())
          throw IoError(path + ": incomplete triangle at (" + std::to_string(s) +
                        "," + std::to_string(m - s) + ")");
        values.push_back(it->second);
      }
    subs.push_back({FiniteTableRequest{remaining, max_n}, std::move(values)});
  }
  return IndexTable::from_entries(cfg, subs);
}

}  // namespace mabt
