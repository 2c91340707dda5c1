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
#include <filesystem>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "sherdmatch/errors.hpp"
#include "sherdmatch/json_io.hpp"
#include "sherdmatch/vae/model.hpp"

namespace sherdmatch::vae {

/// Feature row: mu followed by sigma = exp(logvar / 2), length 2k.
using FeatureRow = std::vector<double>;

/// Inference-mode encoding. Each image is pushed through the encoder on its
/// own, so a row never depends on which other images share the call.
template <typename T>
std::vector<FeatureRow> encode_features(const Vae<T>& model, const Tensor<T>& images, int threads = 1) {
  const std::size_t n = images.dim(0);
  const std::size_t per = images.size() / n;
  const auto k = static_cast<std::size_t>(model.config().k);
  std::vector<FeatureRow> rows(n);
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  const auto work = [&](std::size_t w) {
    Vae<T> replica(model.config());
    replica.copy_weights_from(model);
    nn::Shape one = images.shape();
    one[0] = 1;
    for (std::size_t i = w; i < n; i += workers) {
      Tensor<T> x(one, nn::AlignedVector<T>(images.ptr() + i * per, images.ptr() + (i + 1) * per));
      const auto [mu, logvar] = replica.encode_forward(x, ForwardContext{});
      FeatureRow& row = rows[i];
      row.resize(2 * k);
      for (std::size_t j = 0; j < k; ++j) {
        row[j] = static_cast<double>(mu[j]);
        row[k + j] = std::exp(0.5 * static_cast<double>(logvar[j]));
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work, w);
  if (workers > 0) work(0);
  for (auto& t : pool) t.join();
  return rows;
}

/// Decoder output for one latent vector: probabilities and the 0.5-thresholded
/// raster (exactly 0.5 goes to background).
struct Reconstruction {
  std::size_t size = 0;
  std::vector<double> logits;
  std::vector<double> probability;
  std::vector<std::uint8_t> pixels;
};

template <typename T>
Reconstruction decode_latent(const Vae<T>& model, std::span<const double> z) {
  const auto k = static_cast<std::size_t>(model.config().k);
  if (z.size() != k) throw ShapeError("decode: latent vector must have length " + std::to_string(k));
  Vae<T> replica(model.config());
  replica.copy_weights_from(model);
  Tensor<T> zt({1, k});
  for (std::size_t j = 0; j < k; ++j) zt[j] = static_cast<T>(z[j]);
  const Tensor<T> logits = replica.decode_forward(zt, ForwardContext{});
  Reconstruction r;
  r.size = static_cast<std::size_t>(model.config().image_size);
  r.logits.resize(logits.size());
  r.probability.resize(logits.size());
  r.pixels.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    r.logits[i] = static_cast<double>(logits[i]);
    r.probability[i] = sigmoid(r.logits[i]);
    r.pixels[i] = r.probability[i] > 0.5 ? 1 : 0;
  }
  return r;
}

/// Reconstruction from the posterior mean of each image.
template <typename T>
std::vector<Reconstruction> reconstruct(const Vae<T>& model, const std::vector<FeatureRow>& features) {
  const auto k = static_cast<std::size_t>(model.config().k);
  std::vector<Reconstruction> out;
  out.reserve(features.size());
  for (const auto& row : features) out.push_back(decode_latent(model, std::span<const double>(row.data(), k)));
  return out;
}

struct FeatureTable {
  std::vector<std::string> ids;
  std::vector<FeatureRow> rows;
};

inline std::string features_csv(const FeatureTable& t) {
  if (t.ids.size() != t.rows.size()) throw ShapeError("feature table: id/row count mismatch");
  const std::size_t dim = t.rows.empty() ? 0 : t.rows.front().size();
  std::string out = "profile_id";
  for (std::size_t j = 0; j < dim; ++j) out += ",z" + std::to_string(j);
  out += '\n';
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (t.rows[i].size() != dim) throw ShapeError("feature table: ragged rows");
    out += t.ids[i];
    for (double v : t.rows[i]) out += ',' + format_double(v);
    out += '\n';
  }
  return out;
}

inline FeatureTable parse_features_csv(const std::string& text) {
  FeatureTable t;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("profile_id", 0) != 0) {
    throw DataError("features CSV must start with a 'profile_id' header");
  }
  const auto dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::getline(ls, cell, ',');
    t.ids.push_back(cell);
    FeatureRow row;
    while (std::getline(ls, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw DataError("features CSV line " + std::to_string(line_no) + ": bad number '" + cell + "'");
      }
    }
    if (row.size() != dim) throw DataError("features CSV line " + std::to_string(line_no) + ": wrong column count");
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline void write_features(const std::filesystem::path& csv_path, const FeatureTable& t, const nlohmann::json& sidecar) {
  write_file(csv_path, features_csv(t));
  auto meta = sidecar;
  meta["rows"] = t.rows.size();
  meta["columns"] = t.rows.empty() ? 0 : t.rows.front().size();
  meta["csv_sha256"] = file_sha256(csv_path);
  std::filesystem::path side = csv_path;
  side.replace_extension(".json");
  write_json(side, meta);
}

inline FeatureTable read_features(const std::filesystem::path& csv_path) {
  return parse_features_csv(read_file(csv_path));
}

}  // namespace sherdmatch::vae
