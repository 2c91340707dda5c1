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

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "sherdmatch/errors.hpp"
#include "sherdmatch/json_io.hpp"
#include "sherdmatch/shape/raster.hpp"

namespace sherdmatch::shape {

/// Decodes any PNG to luminance in [0, 1]; transparent pixels are composited
/// over white paper.
inline GrayImage decode_png(const std::string& bytes, const std::string& what = "png") {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw DataError(what + ": " + img.message);
  }
  img.format = PNG_FORMAT_GA;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw DataError(what + ": " + img.message);
  }
  GrayImage g{img.height, img.width, std::vector<double>(static_cast<std::size_t>(img.height) * img.width)};
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    const double lum = buf[2 * i] / 255.0, alpha = buf[2 * i + 1] / 255.0;
    g.values[i] = alpha * lum + (1.0 - alpha);
  }
  return g;
}

inline GrayImage read_png(const std::filesystem::path& path) {
  return decode_png(read_file(path), path.string());
}

/// 8-bit grayscale PNG; `white_shape` selects negative (shape = 255) output.
inline std::string encode_png(const Mask& m, bool white_shape) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(m.width);
  img.height = static_cast<png_uint_32>(m.height);
  img.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buf(m.pixels.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = (m.pixels[i] != 0) == white_shape ? 255 : 0;
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(img, size, 0, buf.data(), 0, nullptr)) {
    throw Error(ErrorKind::kInternal, std::string("png encode: ") + img.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, buf.data(), 0, nullptr)) {
    throw Error(ErrorKind::kInternal, std::string("png encode: ") + img.message);
  }
  out.resize(size);
  return out;
}

inline std::string encode_png(const GrayImage& g) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(g.width);
  img.height = static_cast<png_uint_32>(g.height);
  img.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buf(g.values.size());
  for (std::size_t i = 0; i < buf.size(); ++i)
    buf[i] = static_cast<png_byte>(std::lround(std::clamp(g.values[i], 0.0, 1.0) * 255.0));
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(img, size, 0, buf.data(), 0, nullptr)) {
    throw Error(ErrorKind::kInternal, std::string("png encode: ") + img.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, buf.data(), 0, nullptr)) {
    throw Error(ErrorKind::kInternal, std::string("png encode: ") + img.message);
  }
  out.resize(size);
  return out;
}

/// Stored masks are negatives: shape white on black.
inline void write_mask_png(const std::filesystem::path& path, const Mask& m) { write_file(path, encode_png(m, true)); }

inline Mask read_mask_png(const std::filesystem::path& path) {
  const GrayImage g = read_png(path);
  Mask m(g.height, g.width);
  for (std::size_t i = 0; i < m.pixels.size(); ++i) m.pixels[i] = binarize(g.values[i]);
  return m;
}

/// Drawings are positives: shape black on white paper.
inline void write_drawing_png(const std::filesystem::path& path, const Mask& m) {
  write_file(path, encode_png(m, false));
}

}  // namespace sherdmatch::shape
