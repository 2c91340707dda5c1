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

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <tuple>
#include <vector>

#include "sherdmatch/cluster/distance.hpp"
#include "sherdmatch/errors.hpp"

namespace sherdmatch::cluster {

enum class Method { kSingle, kComplete, kAverage, kWeighted, kCentroid, kMedian, kWard };

inline const std::vector<Method>& all_methods() {
  static const std::vector<Method> m{Method::kSingle,   Method::kComplete, Method::kAverage, Method::kWeighted,
                                     Method::kCentroid, Method::kMedian,   Method::kWard};
  return m;
}

inline std::string to_string(Method m) {
  switch (m) {
    case Method::kSingle: return "single";
    case Method::kComplete: return "complete";
    case Method::kAverage: return "average";
    case Method::kWeighted: return "weighted";
    case Method::kCentroid: return "centroid";
    case Method::kMedian: return "median";
    case Method::kWard: return "ward";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (Method m : all_methods())
    if (to_string(m) == s) return m;
  throw DataError("unknown linkage method '" + s + "'");
}

/// Centroid, median and ward are carried on squared distances.
inline bool uses_squared(Method m) { return m == Method::kCentroid || m == Method::kMedian || m == Method::kWard; }

struct Merge {
  std::size_t left = 0;   // smaller cluster id
  std::size_t right = 0;  // larger cluster id
  double height = 0.0;
  std::size_t size = 0;
};

/// Leaves are 0..n-1; merge s creates cluster n + s.
struct Dendrogram {
  std::size_t n = 0;
  std::vector<Merge> merges;
  Method method = Method::kSingle;
  Metric metric = Metric::kEuclidean;

  bool is_leaf(std::size_t id) const { return id < n; }

  /// True when some merge sits below one of its children.
  bool has_inversion() const {
    for (const auto& m : merges) {
      for (std::size_t c : {m.left, m.right})
        if (!is_leaf(c) && merges[c - n].height > m.height) return true;
    }
    return false;
  }
};

/// Lance-Williams update of d(k, i u j) from d(k, i), d(k, j), d(i, j).
inline double lance_williams(Method m, double dki, double dkj, double dij, double ni, double nj, double nk) {
  switch (m) {
    case Method::kSingle: return std::min(dki, dkj);
    case Method::kComplete: return std::max(dki, dkj);
    case Method::kAverage: return (ni * dki + nj * dkj) / (ni + nj);
    case Method::kWeighted: return 0.5 * (dki + dkj);
    case Method::kCentroid: return (ni * dki + nj * dkj) / (ni + nj) - ni * nj * dij / ((ni + nj) * (ni + nj));
    case Method::kMedian: return 0.5 * dki + 0.5 * dkj - 0.25 * dij;
    case Method::kWard: return ((ni + nk) * dki + (nj + nk) * dkj - nk * dij) / (ni + nj + nk);
  }
  return 0.0;
}

/// Merge height from a working (possibly squared) distance.
inline double height_of(Method m, double w) { return uses_squared(m) ? std::sqrt(std::max(0.0, w)) : w; }

/// Agglomerative clustering. Each step merges the pair with the smallest
/// (distance, smaller id, larger id); every slot caches its nearest
/// neighbour so a step only rescans slots whose neighbour just disappeared.
inline Dendrogram linkage(const DistanceMatrix& d, Method method) {
  const std::size_t n = d.n;
  if (n < 2) throw DataError("linkage needs at least two observations");
  Dendrogram t;
  t.n = n;
  t.method = method;
  t.metric = d.metric;
  const bool sq = uses_squared(method);

  std::vector<double> w(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = d(i, j);
      w[i * n + j] = w[j * n + i] = sq ? v * v : v;
    }
  }
  std::vector<std::size_t> id(n), size(n, 1);
  std::vector<bool> active(n, true);
  for (std::size_t i = 0; i < n; ++i) id[i] = i;

  using Key = std::tuple<double, std::size_t, std::size_t>;
  const auto key = [&](std::size_t a, std::size_t b) {
    return Key{w[a * n + b], std::min(id[a], id[b]), std::max(id[a], id[b])};
  };
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> nn(n, kNone);
  const auto refresh = [&](std::size_t a) {
    nn[a] = kNone;
    for (std::size_t b = 0; b < n; ++b) {
      if (b == a || !active[b]) continue;
      if (nn[a] == kNone || key(a, b) < key(a, nn[a])) nn[a] = b;
    }
  };
  for (std::size_t a = 0; a < n; ++a) refresh(a);

  for (std::size_t step = 0; step + 1 < n; ++step) {
    std::size_t best = kNone;
    for (std::size_t a = 0; a < n; ++a) {
      if (!active[a] || nn[a] == kNone) continue;
      if (best == kNone || key(a, nn[a]) < key(best, nn[best])) best = a;
    }
    std::size_t i = best, j = nn[best];
    if (id[i] > id[j]) std::swap(i, j);
    const double dij = w[i * n + j];
    t.merges.push_back({id[i], id[j], height_of(method, dij), size[i] + size[j]});

    const auto ni = static_cast<double>(size[i]), nj = static_cast<double>(size[j]);
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == i || k == j) continue;
      const double v = lance_williams(method, w[k * n + i], w[k * n + j], dij, ni, nj, static_cast<double>(size[k]));
      w[k * n + i] = w[i * n + k] = v;
    }
    // Slot i now holds the merged cluster; slot j is retired.
    active[j] = false;
    id[i] = n + step;
    size[i] += size[j];
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == i) continue;
      if (nn[k] == i || nn[k] == j) {
        refresh(k);
      } else if (key(k, i) < key(k, nn[k])) {
        nn[k] = i;
      }
    }
    refresh(i);
  }
  return t;
}

}  // namespace sherdmatch::cluster
