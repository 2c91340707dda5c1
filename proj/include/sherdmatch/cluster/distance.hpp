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
#include <string>
#include <vector>

#include "sherdmatch/errors.hpp"

namespace sherdmatch::cluster {

enum class Metric { kEuclidean, kCityblock, kChebychev, kCosine };

inline const std::vector<Metric>& all_metrics() {
  static const std::vector<Metric> m{Metric::kEuclidean, Metric::kCityblock, Metric::kChebychev, Metric::kCosine};
  return m;
}

inline std::string to_string(Metric m) {
  switch (m) {
    case Metric::kEuclidean: return "euclidean";
    case Metric::kCityblock: return "cityblock";
    case Metric::kChebychev: return "chebychev";
    case Metric::kCosine: return "cosine";
  }
  return "?";
}

inline Metric parse_metric(const std::string& s) {
  for (Metric m : all_metrics())
    if (to_string(m) == s) return m;
  throw DataError("unknown metric '" + s + "'");
}

/// Condensed upper triangle, pairs (i, j) with i < j in row-major order.
struct DistanceMatrix {
  std::size_t n = 0;
  std::vector<double> values;
  Metric metric = Metric::kEuclidean;
  std::size_t zero_norm_pairs = 0;  // cosine pairs defaulted to 1

  static std::size_t index(std::size_t n, std::size_t i, std::size_t j) {
    if (i > j) std::swap(i, j);
    return n * i - i * (i + 1) / 2 + (j - i - 1);
  }
  double operator()(std::size_t i, std::size_t j) const { return i == j ? 0.0 : values[index(n, i, j)]; }
};

/// Distance between two vectors; cosine with a zero-norm side is 1.
inline double distance(const std::vector<double>& a, const std::vector<double>& b, Metric m, bool* zero_norm = nullptr) {
  if (a.size() != b.size()) throw ShapeError("distance: vectors differ in length");
  double acc = 0.0;
  switch (m) {
    case Metric::kEuclidean:
      for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
      return std::sqrt(acc);
    case Metric::kCityblock:
      for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
      return acc;
    case Metric::kChebychev:
      for (std::size_t i = 0; i < a.size(); ++i) acc = std::max(acc, std::abs(a[i] - b[i]));
      return acc;
    case Metric::kCosine: {
      double na = 0.0, nb = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        acc += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
      }
      if (na == 0.0 || nb == 0.0) {
        if (zero_norm) *zero_norm = true;
        return 1.0;
      }
      // Rounding can push the cosine a hair outside [-1, 1].
      return std::max(0.0, 1.0 - acc / (std::sqrt(na) * std::sqrt(nb)));
    }
  }
  return acc;
}

inline DistanceMatrix pairwise_distances(const std::vector<std::vector<double>>& x, Metric m) {
  if (x.size() < 2) throw DataError("pairwise distances need at least two feature rows");
  DistanceMatrix d;
  d.n = x.size();
  d.metric = m;
  d.values.reserve(d.n * (d.n - 1) / 2);
  for (std::size_t i = 0; i < d.n; ++i) {
    for (std::size_t j = i + 1; j < d.n; ++j) {
      bool zero = false;
      const double v = distance(x[i], x[j], m, &zero);
      if (!std::isfinite(v)) throw NumericError("non-finite distance between rows " + std::to_string(i) + " and " + std::to_string(j));
      if (zero) ++d.zero_norm_pairs;
      d.values.push_back(v);
    }
  }
  return d;
}

}  // namespace sherdmatch::cluster
