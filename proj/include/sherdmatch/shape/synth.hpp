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
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "sherdmatch/errors.hpp"
#include "sherdmatch/rng.hpp"
#include "sherdmatch/shape/profile_id.hpp"
#include "sherdmatch/shape/raster.hpp"

namespace sherdmatch::shape {

enum class LipType { kEverted = 0, kInverted = 1, kFlat = 2, kBead = 3 };

inline const char* to_string(LipType t) {
  switch (t) {
    case LipType::kEverted: return "everted";
    case LipType::kInverted: return "inverted";
    case LipType::kFlat: return "flat";
    case LipType::kBead: return "bead";
  }
  return "?";
}

/// Geometry of one rim, in canvas pixels and degrees.
struct RimParams {
  LipType lip = LipType::kEverted;
  double height = 180.0;
  double thickness = 50.0;
  double inclination = 0.0;  // wall lean, positive = outward
  double curvature = 0.0;    // quadratic bow of the wall, fraction of height
  double lip_length = 40.0;
  double lip_angle = 20.0;   // droop of everted/inverted lips
};

struct SyntheticProfile {
  ProfileId id;
  int family = 0;
  RimParams params;
  Mask mask;
};

struct SynthOptions {
  int count = 200;
  int families = 4;
  std::uint64_t seed = 7;
  std::size_t image_size = 64;
  std::size_t canvas = 256;
};

namespace detail {

struct Canvas {
  Mask m;

  void capsule(double ax, double ay, double bx, double by, double r) {
    const double vx = bx - ax, vy = by - ay, len2 = vx * vx + vy * vy;
    const long y0 = std::max(0L, static_cast<long>(std::floor(std::min(ay, by) - r)));
    const long y1 = std::min(static_cast<long>(m.height) - 1, static_cast<long>(std::ceil(std::max(ay, by) + r)));
    const long x0 = std::max(0L, static_cast<long>(std::floor(std::min(ax, bx) - r)));
    const long x1 = std::min(static_cast<long>(m.width) - 1, static_cast<long>(std::ceil(std::max(ax, bx) + r)));
    for (long y = y0; y <= y1; ++y) {
      for (long x = x0; x <= x1; ++x) {
        const double px = static_cast<double>(x) + 0.5 - ax, py = static_cast<double>(y) + 0.5 - ay;
        const double t = len2 > 0 ? std::clamp((px * vx + py * vy) / len2, 0.0, 1.0) : 0.0;
        const double dx = px - t * vx, dy = py - t * vy;
        if (dx * dx + dy * dy <= r * r) m.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = 1;
      }
    }
  }

  void rect(double cx, double top, double w, double h) {
    for (std::size_t y = 0; y < m.height; ++y) {
      for (std::size_t x = 0; x < m.width; ++x) {
        const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
        if (std::abs(px - cx) <= w / 2 && py >= top && py <= top + h) m.at(y, x) = 1;
      }
    }
  }
};

}  // namespace detail

/// Rasterises a rim: a thick, possibly leaning and bowed wall with a lip on top.
inline Mask render_rim(const RimParams& p, std::size_t canvas) {
  detail::Canvas c{Mask(canvas, canvas)};
  const double deg = std::numbers::pi / 180.0;
  const double base_x = static_cast<double>(canvas) * 0.45;
  const double base_y = static_cast<double>(canvas) * 0.5 + p.height / 2;
  const double lean = std::tan(p.inclination * deg);
  const auto wall = [&](double t) {
    return std::pair{base_x + p.height * (lean * t + p.curvature * t * t), base_y - p.height * t};
  };
  const double r = p.thickness / 2;
  constexpr int kSteps = 48;
  for (int i = 0; i < kSteps; ++i) {
    const auto [ax, ay] = wall(static_cast<double>(i) / kSteps);
    const auto [bx, by] = wall(static_cast<double>(i + 1) / kSteps);
    c.capsule(ax, ay, bx, by, r);
  }
  const auto [tx, ty] = wall(1.0);
  const double droop = p.lip_angle * deg;
  switch (p.lip) {
    case LipType::kEverted:
      c.capsule(tx, ty, tx + p.lip_length * std::cos(droop), ty + p.lip_length * std::sin(droop), 0.8 * r);
      break;
    case LipType::kInverted:
      c.capsule(tx, ty, tx - p.lip_length * std::cos(droop), ty + p.lip_length * std::sin(droop), 0.8 * r);
      break;
    case LipType::kFlat:
      c.rect(tx, ty - r, p.thickness + 1.2 * p.lip_length, 0.9 * r);
      break;
    case LipType::kBead:
      c.capsule(tx, ty, tx, ty, r + 0.35 * p.lip_length);
      break;
  }
  return c.m;
}

/// Per-family centre parameters; lip type cycles through the four kinds.
inline RimParams family_params(int family, std::uint64_t seed) {
  Rng rng(Rng::mix(seed, 0x66616d00ULL + static_cast<std::uint64_t>(family)));
  RimParams p;
  p.lip = static_cast<LipType>(family % 4);
  p.height = rng.uniform(100.0, 140.0);
  p.thickness = rng.uniform(56.0, 70.0);
  p.inclination = rng.uniform(-15.0, 15.0);
  p.curvature = rng.uniform(-0.15, 0.15);
  p.lip_length = rng.uniform(40.0, 60.0);
  p.lip_angle = rng.uniform(5.0, 35.0);
  return p;
}

inline RimParams jitter(const RimParams& centre, Rng& rng) {
  RimParams p = centre;
  p.height *= rng.uniform(0.85, 1.15);
  p.thickness *= rng.uniform(0.92, 1.08);
  p.inclination += rng.uniform(-6.0, 6.0);
  p.curvature += rng.uniform(-0.06, 0.06);
  p.lip_length *= rng.uniform(0.75, 1.25);
  p.lip_angle += rng.uniform(-8.0, 8.0);
  return p;
}

/// `SYN-<page>.<figure>` with twenty profiles per catalogue page.
inline ProfileId synthetic_id(int index) {
  char page[16], fig[16];
  std::snprintf(page, sizeof page, "%02d", 1 + index / 20);
  std::snprintf(fig, sizeof fig, "%03d", index + 1);
  return {"SYN", page, fig};
}

/// Rim-like profiles, sample i belonging to family i mod families. Output
/// masks are already normalized to `image_size`.
inline std::vector<SyntheticProfile> generate_synthetic(const SynthOptions& o) {
  if (o.families < 1) throw ConfigError("synthetic generator needs at least one family");
  if (o.count < 0) throw ConfigError("synthetic count must be non-negative");
  std::vector<RimParams> centres;
  for (int f = 0; f < o.families; ++f) centres.push_back(family_params(f, o.seed));
  std::vector<SyntheticProfile> out;
  out.reserve(static_cast<std::size_t>(o.count));
  for (int i = 0; i < o.count; ++i) {
    Rng rng(Rng::mix(o.seed, static_cast<std::uint64_t>(i)));
    SyntheticProfile s;
    s.id = synthetic_id(i);
    s.family = i % o.families;
    s.params = jitter(centres[static_cast<std::size_t>(s.family)], rng);
    s.mask = normalize_mask(render_rim(s.params, o.canvas), o.image_size);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace sherdmatch::shape
