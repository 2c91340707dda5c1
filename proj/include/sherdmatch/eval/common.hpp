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
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sherdmatch/errors.hpp"
#include "sherdmatch/json_io.hpp"
#include "sherdmatch/nn/tensor.hpp"
#include "sherdmatch/rng.hpp"
#include "sherdmatch/shape/raster.hpp"
#include "sherdmatch/vae/features.hpp"
#include "sherdmatch/vae/loss.hpp"

namespace sherdmatch::eval {

/// Stacks square masks into a [N, 1, S, S] tensor of 0/1 values.
template <typename T>
nn::Tensor<T> masks_to_tensor(const std::vector<shape::Mask>& masks) {
  if (masks.empty()) throw DataError("no images to stack");
  const std::size_t s = masks.front().height;
  nn::Tensor<T> out({masks.size(), 1, s, s});
  for (std::size_t i = 0; i < masks.size(); ++i) {
    if (masks[i].height != s || masks[i].width != s) throw ShapeError("all images must be " + std::to_string(s) + "x" + std::to_string(s));
    for (std::size_t p = 0; p < s * s; ++p) out[i * s * s + p] = static_cast<T>(masks[i].pixels[p]);
  }
  return out;
}

enum class LatentNoise { kMultiplicative, kAdditive };

/// Multiplicative: z * (1 + f * eta). Additive: z + f * |z| / sqrt(d) * eta,
/// so the noise norm is about f times the feature norm.
inline std::vector<double> perturb_latent(const std::vector<double>& z, double fraction, Rng& rng,
                                          LatentNoise mode = LatentNoise::kMultiplicative) {
  if (!(fraction >= 0.0)) throw ConfigError("latent perturbation fraction must be non-negative");
  std::vector<double> out = z;
  if (mode == LatentNoise::kMultiplicative) {
    for (auto& v : out) v *= 1.0 + fraction * rng.normal();
  } else {
    double norm = 0.0;
    for (double v : z) norm += v * v;
    const double scale = fraction * std::sqrt(norm / static_cast<double>(std::max<std::size_t>(1, z.size())));
    for (auto& v : out) v += scale * rng.normal();
  }
  return out;
}

/// Quartiles by linear interpolation between order statistics, plus Tukey
/// whiskers (furthest data within 1.5 IQR of the box).
struct BoxStats {
  std::size_t count = 0;
  double mean = 0, min = 0, q1 = 0, median = 0, q3 = 0, max = 0, whisker_low = 0, whisker_high = 0;
};

inline double quantile_sorted(const std::vector<double>& s, double q) {
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

inline BoxStats box_stats(std::vector<double> v) {
  BoxStats b;
  b.count = v.size();
  if (v.empty()) return b;
  std::sort(v.begin(), v.end());
  double sum = 0;
  for (double x : v) sum += x;
  b.mean = sum / static_cast<double>(v.size());
  b.min = v.front();
  b.max = v.back();
  b.q1 = quantile_sorted(v, 0.25);
  b.median = quantile_sorted(v, 0.5);
  b.q3 = quantile_sorted(v, 0.75);
  const double iqr = b.q3 - b.q1;
  b.whisker_low = b.q1;
  b.whisker_high = b.q3;
  for (double x : v) {
    if (x >= b.q1 - 1.5 * iqr) b.whisker_low = std::min(b.whisker_low, x);
    if (x <= b.q3 + 1.5 * iqr) b.whisker_high = std::max(b.whisker_high, x);
  }
  return b;
}

inline nlohmann::json to_json(const BoxStats& b) {
  return {{"count", b.count}, {"mean", b.mean},   {"min", b.min}, {"q1", b.q1},
          {"median", b.median}, {"q3", b.q3}, {"max", b.max}, {"whisker_low", b.whisker_low},
          {"whisker_high", b.whisker_high}};
}

/// Soft reconstruction metrics of a decoded probability map against a mask.
struct ReconScore {
  double mse = 0.0;
  double iou = 0.0;
};

inline ReconScore score_reconstruction(const shape::Mask& x, const vae::Reconstruction& r) {
  if (x.pixels.size() != r.logits.size()) throw ShapeError("reconstruction size does not match image");
  const std::vector<double> xv(x.pixels.begin(), x.pixels.end());
  return {vae::mse_metric<double>(xv, r.logits), vae::iou_metric<double>(xv, r.logits)};
}

}  // namespace sherdmatch::eval
