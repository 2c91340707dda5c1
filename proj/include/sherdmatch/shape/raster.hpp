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
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "sherdmatch/errors.hpp"

namespace sherdmatch::shape {

/// Grayscale raster, row-major, values in [0, 1] (1 = white paper).
struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
};

/// Binary raster, row-major; 1 = shape, 0 = background.
struct Mask {
  Mask() = default;
  Mask(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), pixels(h * w, fill) {}

  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  std::uint8_t& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }

  /// Out-of-frame reads as background.
  std::uint8_t get(long y, long x) const {
    if (y < 0 || x < 0 || y >= static_cast<long>(height) || x >= static_cast<long>(width)) return 0;
    return pixels[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)];
  }

  std::size_t count() const {
    return static_cast<std::size_t>(std::count(pixels.begin(), pixels.end(), std::uint8_t{1}));
  }
  bool empty() const { return count() == 0; }

  bool operator==(const Mask&) const = default;
};

struct BoundingBox {
  std::size_t top = 0, left = 0, bottom = 0, right = 0;  // inclusive
  std::size_t height() const { return bottom - top + 1; }
  std::size_t width() const { return right - left + 1; }
};

inline std::optional<BoundingBox> bounding_box(const Mask& m) {
  std::optional<BoundingBox> box;
  for (std::size_t y = 0; y < m.height; ++y) {
    for (std::size_t x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      if (!box) {
        box = BoundingBox{y, x, y, x};
      } else {
        box->top = std::min(box->top, y);
        box->bottom = std::max(box->bottom, y);
        box->left = std::min(box->left, x);
        box->right = std::max(box->right, x);
      }
    }
  }
  return box;
}

inline Mask complement(const Mask& m) {
  Mask out = m;
  for (auto& p : out.pixels) p = p ? 0 : 1;
  return out;
}

/// Pixels strictly above 0.5 become foreground; an exact 0.5 is background.
inline std::uint8_t binarize(double v) { return v > 0.5 ? 1 : 0; }

namespace detail {

/// Box-filter resample of a binary crop to out_h x out_w coverage values.
inline std::vector<double> area_resample(const Mask& src, const BoundingBox& box, std::size_t out_h,
                                         std::size_t out_w) {
  const double sy = static_cast<double>(box.height()) / static_cast<double>(out_h);
  const double sx = static_cast<double>(box.width()) / static_cast<double>(out_w);
  std::vector<double> out(out_h * out_w, 0.0);
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const double y0 = static_cast<double>(oy) * sy, y1 = y0 + sy;
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const double x0 = static_cast<double>(ox) * sx, x1 = x0 + sx;
      double acc = 0.0;
      for (auto iy = static_cast<std::size_t>(y0); static_cast<double>(iy) < y1 && iy < box.height(); ++iy) {
        const double wy = std::min(y1, static_cast<double>(iy + 1)) - std::max(y0, static_cast<double>(iy));
        if (wy <= 0.0) continue;
        for (auto ix = static_cast<std::size_t>(x0); static_cast<double>(ix) < x1 && ix < box.width(); ++ix) {
          if (!src.at(box.top + iy, box.left + ix)) continue;
          const double wx = std::min(x1, static_cast<double>(ix + 1)) - std::max(x0, static_cast<double>(ix));
          if (wx > 0.0) acc += wy * wx;
        }
      }
      out[oy * out_w + ox] = acc / (sy * sx);
    }
  }
  return out;
}

inline Mask fit_once(const Mask& m, const BoundingBox& box, std::size_t size, double target_long) {
  const double scale = target_long / static_cast<double>(std::max(box.height(), box.width()));
  const auto scaled = [&](std::size_t v) {
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(static_cast<double>(v) * scale)), 1, size);
  };
  const std::size_t h = scaled(box.height()), w = scaled(box.width());
  Mask out(size, size);
  const std::size_t oy = (size - h) / 2, ox = (size - w) / 2;
  if (h == box.height() && w == box.width()) {
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out.at(oy + y, ox + x) = m.at(box.top + y, box.left + x);
    return out;
  }
  const auto cover = area_resample(m, box, h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) out.at(oy + y, ox + x) = binarize(cover[y * w + x]);
  return out;
}

}  // namespace detail

/// Tight crop, scale the longest side to `size` keeping the aspect ratio,
/// and centre on a size x size background canvas. A mask that is already in
/// that form is returned unchanged.
inline Mask normalize_mask(const Mask& m, std::size_t size) {
  if (size == 0) throw ConfigError("normalize: image size must be positive");
  auto box = bounding_box(m);
  if (!box) throw DataError("empty profile");
  Mask cur = detail::fit_once(m, *box, size, static_cast<double>(size));
  // Thresholding can drop a thin edge row; grow the target until the long
  // side lands on the canvas size again.
  double target = static_cast<double>(size);
  for (int it = 0; it < 4; ++it) {
    auto b = bounding_box(cur);
    if (!b) throw DataError("empty profile after resampling");
    if (std::max(b->height(), b->width()) == size) {
      return detail::fit_once(cur, *b, size, static_cast<double>(size));
    }
    target += static_cast<double>(size - std::max(b->height(), b->width()));
    cur = detail::fit_once(m, *box, size, target);
  }
  auto b = bounding_box(cur);
  if (!b) throw DataError("empty profile after resampling");
  return detail::fit_once(cur, *b, size, static_cast<double>(std::max(b->height(), b->width())));
}

/// Drawing (dark shape on light paper) to normalized negative mask.
inline Mask normalize(const GrayImage& drawing, std::size_t size) {
  if (drawing.height == 0 || drawing.width == 0) throw DataError("empty raster");
  Mask m(drawing.height, drawing.width);
  for (std::size_t i = 0; i < m.pixels.size(); ++i) m.pixels[i] = binarize(1.0 - drawing.values[i]);
  return normalize_mask(m, size);
}

/// Renders a mask back as a drawing: shape black (0), paper white (1).
inline GrayImage to_drawing(const Mask& m) {
  GrayImage g{m.height, m.width, std::vector<double>(m.pixels.size())};
  for (std::size_t i = 0; i < m.pixels.size(); ++i) g.values[i] = m.pixels[i] ? 0.0 : 1.0;
  return g;
}

/// Offsets of the discrete disk {(dx, dy) : dx^2 + dy^2 <= r^2}.
inline std::vector<std::pair<int, int>> disk_offsets(int r) {
  std::vector<std::pair<int, int>> out;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      if (dx * dx + dy * dy <= r * r) out.emplace_back(dy, dx);
  return out;
}

/// Binary erosion with a disk; pixels outside the frame count as background.
inline Mask erode(const Mask& m, int r) {
  if (r < 1) throw ConfigError("erosion radius must be >= 1");
  const auto disk = disk_offsets(r);
  Mask out(m.height, m.width);
  for (std::size_t y = 0; y < m.height; ++y) {
    for (std::size_t x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      bool keep = true;
      for (const auto& [dy, dx] : disk) {
        if (!m.get(static_cast<long>(y) + dy, static_cast<long>(x) + dx)) {
          keep = false;
          break;
        }
      }
      out.at(y, x) = keep ? 1 : 0;
    }
  }
  return out;
}

inline Mask dilate(const Mask& m, int r) {
  if (r < 1) throw ConfigError("dilation radius must be >= 1");
  const auto disk = disk_offsets(r);
  Mask out(m.height, m.width);
  for (std::size_t y = 0; y < m.height; ++y) {
    for (std::size_t x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      for (const auto& [dy, dx] : disk) {
        const long yy = static_cast<long>(y) + dy, xx = static_cast<long>(x) + dx;
        if (yy >= 0 && xx >= 0 && yy < static_cast<long>(m.height) && xx < static_cast<long>(m.width)) {
          out.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)) = 1;
        }
      }
    }
  }
  return out;
}

struct RotateResult {
  Mask mask;
  bool clipped = false;  // some foreground would land outside the frame
};

/// Counter-clockwise (as displayed, y pointing down) rotation about the image
/// centre with bilinear resampling and re-binarization.
inline RotateResult rotate(const Mask& m, double degrees) {
  RotateResult res{Mask(m.height, m.width), false};
  if (degrees == 0.0) {
    res.mask = m;
    return res;
  }
  const double th = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(th), s = std::sin(th);
  const double cy = (static_cast<double>(m.height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(m.width) - 1.0) / 2.0;
  const auto sample = [&](double y, double x) {
    const double fy = std::floor(y), fx = std::floor(x);
    const double ty = y - fy, tx = x - fx;
    const long y0 = static_cast<long>(fy), x0 = static_cast<long>(fx);
    return (1 - ty) * ((1 - tx) * m.get(y0, x0) + tx * m.get(y0, x0 + 1)) +
           ty * ((1 - tx) * m.get(y0 + 1, x0) + tx * m.get(y0 + 1, x0 + 1));
  };
  for (std::size_t y = 0; y < m.height; ++y) {
    for (std::size_t x = 0; x < m.width; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      // Inverse of the forward map (dx, dy) -> (c dx + s dy, -s dx + c dy).
      const double sx = c * dx - s * dy + cx, sy = s * dx + c * dy + cy;
      res.mask.at(y, x) = binarize(sample(sy, sx));
    }
  }
  for (std::size_t y = 0; y < m.height && !res.clipped; ++y) {
    for (std::size_t x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      const double tx = c * dx + s * dy + cx, ty = -s * dx + c * dy + cy;
      if (tx < -0.5 || ty < -0.5 || tx >= static_cast<double>(m.width) - 0.5 ||
          ty >= static_cast<double>(m.height) - 0.5) {
        res.clipped = true;
        break;
      }
    }
  }
  return res;
}

/// 1 - 2|A n B| / (|A| + |B|) on binary masks; 0 when both are empty.
inline double iou_distance(const Mask& a, const Mask& b) {
  if (a.height != b.height || a.width != b.width) throw ShapeError("iou_distance: raster sizes differ");
  double inter = 0, sa = 0, sb = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    inter += a.pixels[i] & b.pixels[i];
    sa += a.pixels[i];
    sb += b.pixels[i];
  }
  return sa + sb == 0 ? 0.0 : 1.0 - 2.0 * inter / (sa + sb);
}

}  // namespace sherdmatch::shape
