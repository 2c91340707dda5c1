/* Copyright (c) 2026 The sherdmatch Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sherdmatch/cluster/analysis.hpp"
#include "sherdmatch/cluster/linkage.hpp"
#include "sherdmatch/errors.hpp"
#include "sherdmatch/json_io.hpp"

// Dendrogram document (schema_version 1), keys sorted, floats with 17
// significant digits:
//   schema          "sherdmatch.dendrogram"
//   schema_version  1
//   method, metric  linkage tags
//   n_leaves        n
//   leaves          [{index, id}] in leaf order
//   merges          [{left, right, height, size}]; merge s creates id n + s
//   cophenetic_coefficient  number, or null when undefined
//   inversions      true when some merge sits below a child

namespace sherdmatch::cluster {

inline constexpr int kDendrogramSchema = 1;

struct DendrogramDocument {
  Dendrogram tree;
  std::vector<std::string> leaf_ids;
  std::optional<double> coefficient;
};

inline nlohmann::json to_json(const DendrogramDocument& doc) {
  const auto& t = doc.tree;
  if (t.n == 0 || doc.leaf_ids.size() != t.n) throw DataError("dendrogram export needs one id per leaf");
  nlohmann::json leaves = nlohmann::json::array(), merges = nlohmann::json::array();
  for (std::size_t i = 0; i < t.n; ++i) leaves.push_back({{"index", i}, {"id", doc.leaf_ids[i]}});
  for (const auto& m : t.merges)
    merges.push_back({{"left", m.left}, {"right", m.right}, {"height", m.height}, {"size", m.size}});
  return {{"schema", "sherdmatch.dendrogram"},
          {"schema_version", kDendrogramSchema},
          {"method", to_string(t.method)},
          {"metric", to_string(t.metric)},
          {"n_leaves", t.n},
          {"leaves", leaves},
          {"merges", merges},
          {"cophenetic_coefficient", doc.coefficient ? nlohmann::json(*doc.coefficient) : nlohmann::json(nullptr)},
          {"inversions", t.has_inversion()}};
}

/// Byte-stable export.
inline std::string export_dendrogram(const DendrogramDocument& doc) { return canonical_dump(to_json(doc), 2) + "\n"; }

inline DendrogramDocument import_dendrogram(const nlohmann::json& j) {
  DendrogramDocument doc;
  try {
    if (j.at("schema").get<std::string>() != "sherdmatch.dendrogram" ||
        j.at("schema_version").get<int>() != kDendrogramSchema) {
      throw DataError("unsupported dendrogram schema");
    }
    auto& t = doc.tree;
    t.method = parse_method(j.at("method").get<std::string>());
    t.metric = parse_metric(j.at("metric").get<std::string>());
    t.n = j.at("n_leaves").get<std::size_t>();
    if (t.n == 0) throw DataError("dendrogram has no leaves");
    for (const auto& l : j.at("leaves")) doc.leaf_ids.push_back(l.at("id").get<std::string>());
    for (const auto& m : j.at("merges")) {
      t.merges.push_back({m.at("left").get<std::size_t>(), m.at("right").get<std::size_t>(),
                          m.at("height").get<double>(), m.at("size").get<std::size_t>()});
    }
    const auto& c = j.at("cophenetic_coefficient");
    if (!c.is_null()) doc.coefficient = c.get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("dendrogram: ") + e.what());
  }
  const auto& t = doc.tree;
  if (doc.leaf_ids.size() != t.n || t.merges.size() + 1 != t.n) throw DataError("dendrogram: leaf/merge counts disagree");
  std::vector<bool> used(2 * t.n - 1, false);
  std::vector<std::size_t> size(2 * t.n - 1, 1);
  for (std::size_t s = 0; s < t.merges.size(); ++s) {
    const auto& m = t.merges[s];
    for (std::size_t c : {m.left, m.right}) {
      if (c >= t.n + s || used[c]) throw DataError("dendrogram: merge " + std::to_string(s) + " reuses or forward-references a cluster");
      used[c] = true;
    }
    size[t.n + s] = size[m.left] + size[m.right];
    if (size[t.n + s] != m.size) throw DataError("dendrogram: merge " + std::to_string(s) + " has the wrong size");
  }
  return doc;
}

inline DendrogramDocument read_dendrogram(const std::filesystem::path& p) { return import_dendrogram(read_json(p)); }

/// method,metric,coefficient,flags; coefficient empty when undefined.
inline std::string selection_csv(const SelectionReport& r) {
  std::string out = "method,metric,coefficient,flags\n";
  for (std::size_t i = 0; i < r.table.size(); ++i) {
    const auto& e = r.table[i];
    std::string flags;
    const auto add = [&](const char* f) { flags += flags.empty() ? f : std::string(";") + f; };
    if (i == r.chosen) add("selected");
    if (e.geometric_caveat) add("non_euclidean_geometry");
    if (e.inversion) add("inversion");
    if (!e.coefficient) add("undefined");
    out += to_string(e.method) + "," + to_string(e.metric) + "," + (e.coefficient ? format_double(*e.coefficient) : "") +
           "," + flags + "\n";
  }
  return out;
}

/// Order-independent key of a seed pair: the two ids sorted, joined by '~'.
inline std::string seed_key(const std::string& a, const std::string& b) { return a < b ? a + "~" + b : b + "~" + a; }

inline nlohmann::json seeds_to_json(const std::vector<Seed>& seeds, const std::vector<std::string>& ids,
                                    const std::string& dendrogram_sha256) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& s : seeds) {
    list.push_back({{"key", seed_key(ids[s.left], ids[s.right])},
                    {"left", ids[s.left]},
                    {"right", ids[s.right]},
                    {"height", s.height},
                    {"merge", s.merge}});
  }
  return {{"schema_version", 1}, {"dendrogram_sha256", dendrogram_sha256}, {"seeds", list}};
}

}  // namespace sherdmatch::cluster
