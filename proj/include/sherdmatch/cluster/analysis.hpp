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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sherdmatch/cluster/distance.hpp"
#include "sherdmatch/cluster/linkage.hpp"
#include "sherdmatch/errors.hpp"

namespace sherdmatch::cluster {

/// Pearson correlation; nullopt when either side has zero variance.
inline std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) throw ShapeError("pearson: vectors must be non-empty and equal length");
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(a.size());
  mb /= static_cast<double>(b.size());
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

/// Member leaves of every cluster id (leaves first, then merges).
inline std::vector<std::vector<std::size_t>> cluster_members(const Dendrogram& t) {
  std::vector<std::vector<std::size_t>> members(t.n + t.merges.size());
  for (std::size_t i = 0; i < t.n; ++i) members[i] = {i};
  for (std::size_t s = 0; s < t.merges.size(); ++s) {
    auto& out = members[t.n + s];
    out = members[t.merges[s].left];
    out.insert(out.end(), members[t.merges[s].right].begin(), members[t.merges[s].right].end());
  }
  return members;
}

struct CopheneticResult {
  std::optional<double> coefficient;
  std::vector<double> distances;  // condensed, same layout as DistanceMatrix
};

inline CopheneticResult cophenetic(const DistanceMatrix& d, const Dendrogram& t) {
  if (d.n != t.n || t.merges.size() + 1 != t.n) throw ShapeError("cophenetic: dendrogram does not match distance matrix");
  CopheneticResult r;
  r.distances.assign(d.values.size(), 0.0);
  const auto members = cluster_members(t);
  for (const auto& m : t.merges) {
    for (std::size_t a : members[m.left])
      for (std::size_t b : members[m.right]) r.distances[DistanceMatrix::index(t.n, a, b)] = m.height;
  }
  r.coefficient = pearson(d.values, r.distances);
  return r;
}

struct SelectionEntry {
  Method method;
  Metric metric;
  std::optional<double> coefficient;
  bool geometric_caveat = false;  // centroid/median/ward on a non-Euclidean metric
  bool inversion = false;
};

struct SelectionReport {
  std::vector<SelectionEntry> table;  // 7 methods x 4 metrics, method-major
  std::size_t chosen = 0;             // index into table
  const SelectionEntry& best() const { return table[chosen]; }
};

/// Preference when coefficients tie within 1e-12: metrics in their listed
/// order, then average, complete, weighted, single, ward, centroid, median.
inline int method_priority(Method m) {
  switch (m) {
    case Method::kAverage: return 0;
    case Method::kComplete: return 1;
    case Method::kWeighted: return 2;
    case Method::kSingle: return 3;
    case Method::kWard: return 4;
    case Method::kCentroid: return 5;
    case Method::kMedian: return 6;
  }
  return 7;
}

struct SelectionResult {
  SelectionReport report;
  Dendrogram dendrogram;
  DistanceMatrix distances;
  CopheneticResult cophenetic;
};

/// Scores all 28 method/metric pairs and keeps the highest cophenetic
/// coefficient. Undefined coefficients rank below every defined one.
inline SelectionResult select_best(const std::vector<std::vector<double>>& features) {
  if (features.size() < 2) throw DataError("clustering needs at least two feature rows");
  SelectionResult out;
  std::vector<DistanceMatrix> dist;
  for (Metric me : all_metrics()) dist.push_back(pairwise_distances(features, me));
  std::vector<Dendrogram> trees;
  std::vector<CopheneticResult> cophs;
  for (Method mth : all_methods()) {
    for (std::size_t mi = 0; mi < all_metrics().size(); ++mi) {
      Dendrogram t = linkage(dist[mi], mth);
      CopheneticResult c = cophenetic(dist[mi], t);
      SelectionEntry e{mth, all_metrics()[mi], c.coefficient,
                       uses_squared(mth) && all_metrics()[mi] != Metric::kEuclidean, t.has_inversion()};
      out.report.table.push_back(e);
      trees.push_back(std::move(t));
      cophs.push_back(std::move(c));
    }
  }
  const auto better = [&](std::size_t a, std::size_t b) {
    const auto& ea = out.report.table[a];
    const auto& eb = out.report.table[b];
    if (ea.coefficient.has_value() != eb.coefficient.has_value()) return ea.coefficient.has_value();
    if (ea.coefficient && std::abs(*ea.coefficient - *eb.coefficient) > 1e-12) return *ea.coefficient > *eb.coefficient;
    if (ea.metric != eb.metric) return ea.metric < eb.metric;
    return method_priority(ea.method) < method_priority(eb.method);
  };
  std::size_t best = 0;
  for (std::size_t i = 1; i < out.report.table.size(); ++i)
    if (better(i, best)) best = i;
  out.report.chosen = best;
  out.dendrogram = trees[best];
  out.cophenetic = cophs[best];
  out.distances = dist[best % all_metrics().size()];
  return out;
}

struct Seed {
  std::size_t left = 0;   // leaf index
  std::size_t right = 0;  // leaf index
  double height = 0.0;
  std::size_t merge = 0;  // merge step that produced it
};

/// Merges whose two children are both leaves, ascending by height.
inline std::vector<Seed> extract_seeds(const Dendrogram& t) {
  std::vector<Seed> seeds;
  for (std::size_t s = 0; s < t.merges.size(); ++s) {
    const auto& m = t.merges[s];
    if (t.is_leaf(m.left) && t.is_leaf(m.right)) seeds.push_back({m.left, m.right, m.height, s});
  }
  std::stable_sort(seeds.begin(), seeds.end(), [](const Seed& a, const Seed& b) { return a.height < b.height; });
  return seeds;
}

/// Cluster label per leaf after the first n - k merges (k clusters).
inline std::vector<std::size_t> cut_clusters(const Dendrogram& t, std::size_t k) {
  if (k < 1 || k > t.n) throw ConfigError("cluster count must lie in [1, n]");
  std::vector<std::size_t> parent(t.n + t.merges.size());
  for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = i;
  const auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t s = 0; s < t.n - k; ++s) {
    parent[find(t.merges[s].left)] = t.n + s;
    parent[find(t.merges[s].right)] = t.n + s;
  }
  std::map<std::size_t, std::size_t> relabel;
  std::vector<std::size_t> labels(t.n);
  for (std::size_t i = 0; i < t.n; ++i) {
    const auto root = find(i);
    const auto it = relabel.try_emplace(root, relabel.size()).first;
    labels[i] = it->second;
  }
  return labels;
}

/// Hubert-Arabie adjusted Rand index; 1 for identical partitions.
inline double adjusted_rand_index(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  if (a.size() != b.size() || a.empty()) throw ShapeError("adjusted_rand_index: label vectors must match");
  std::map<std::pair<std::size_t, std::size_t>, double> joint;
  std::map<std::size_t, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1;
    ra[a[i]] += 1;
    rb[b[i]] += 1;
  }
  const auto c2 = [](double x) { return x * (x - 1) / 2; };
  double idx = 0, sa = 0, sb = 0;
  for (const auto& [k, v] : joint) idx += c2(v);
  for (const auto& [k, v] : ra) sa += c2(v);
  for (const auto& [k, v] : rb) sb += c2(v);
  const double expected = sa * sb / c2(static_cast<double>(a.size()));
  const double max_idx = 0.5 * (sa + sb);
  if (max_idx == expected) return 1.0;
  return (idx - expected) / (max_idx - expected);
}

}  // namespace sherdmatch::cluster
