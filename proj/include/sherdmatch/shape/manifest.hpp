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
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sherdmatch/errors.hpp"
#include "sherdmatch/json_io.hpp"
#include "sherdmatch/rng.hpp"
#include "sherdmatch/shape/profile_id.hpp"
#include "sherdmatch/shape/raster.hpp"

namespace sherdmatch::shape {

inline constexpr int kManifestSchema = 1;

enum class Split { kTrain, kTest };

inline std::string to_string(Split s) { return s == Split::kTrain ? "train" : "test"; }

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw DataError("unknown split tag '" + s + "'");
}

struct ManifestRow {
  ProfileId id;
  std::string path;            // relative to the manifest directory
  Split split = Split::kTrain;
  std::string provenance = "original";  // or "augmented:<op>"
  bool clipped = false;        // rotation pushed foreground out of frame

  bool is_original() const { return provenance == "original"; }
  /// Unique row key: the profile id plus the augmentation op, if any.
  std::string key() const { return is_original() ? id.str() : id.str() + "@" + provenance.substr(10); }
};

struct Manifest {
  std::uint64_t seed = 0;
  std::size_t image_size = 64;
  double test_fraction = 0.1;
  std::vector<ManifestRow> rows;

  std::vector<const ManifestRow*> select(Split split) const {
    std::vector<const ManifestRow*> out;
    for (const auto& r : rows)
      if (r.split == split) out.push_back(&r);
    return out;
  }
  std::vector<const ManifestRow*> originals() const {
    std::vector<const ManifestRow*> out;
    for (const auto& r : rows)
      if (r.is_original()) out.push_back(&r);
    return out;
  }
};

/// Seeded 90/10-style partition of sorted ids; returns the split per id.
inline std::vector<Split> split_ids(const std::vector<ProfileId>& ids, std::uint64_t seed, double test_fraction) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must lie in [0, 1)");
  std::vector<std::size_t> order(ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(Rng::mix(seed, 0x73706c6974ULL));
  rng.shuffle(order.begin(), order.end());
  const auto n_test = static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(ids.size())));
  std::vector<Split> out(ids.size(), Split::kTrain);
  for (std::size_t i = 0; i < n_test; ++i) out[order[i]] = Split::kTest;
  return out;
}

struct AugmentOp {
  std::string name;  // erode3, dilate3, rotate-5, rotate+5
  enum Kind { kErode, kDilate, kRotate } kind;
  double amount;
};

inline const std::vector<AugmentOp>& default_augmentations() {
  static const std::vector<AugmentOp> ops{{"erode3", AugmentOp::kErode, 3},
                                          {"dilate3", AugmentOp::kDilate, 3},
                                          {"rotate-5", AugmentOp::kRotate, -5},
                                          {"rotate+5", AugmentOp::kRotate, 5}};
  return ops;
}

struct AugmentedMask {
  Mask mask;
  bool clipped = false;
  bool dropped = false;  // erosion emptied the shape
};

inline AugmentedMask apply_augmentation(const Mask& m, const AugmentOp& op) {
  AugmentedMask out;
  switch (op.kind) {
    case AugmentOp::kErode:
      out.mask = erode(m, static_cast<int>(op.amount));
      out.dropped = out.mask.empty();
      break;
    case AugmentOp::kDilate:
      out.mask = dilate(m, static_cast<int>(op.amount));
      break;
    case AugmentOp::kRotate: {
      auto r = rotate(m, op.amount);
      out.mask = std::move(r.mask);
      out.clipped = r.clipped;
      out.dropped = out.mask.empty();
      break;
    }
  }
  return out;
}

/// Adds the four augmented variants of every original row. Variants inherit
/// the split of their source; variants whose shape vanishes are skipped.
/// `load` maps an original row to its mask; `store` receives each new row and
/// its mask.
template <typename Load, typename Store>
Manifest augment(const Manifest& in, Load&& load, Store&& store) {
  Manifest out = in;
  out.rows.clear();
  for (const auto& row : in.rows) {
    if (!row.is_original()) continue;
    out.rows.push_back(row);
    const Mask m = load(row);
    for (const auto& op : default_augmentations()) {
      AugmentedMask a = apply_augmentation(m, op);
      if (a.dropped) continue;
      ManifestRow r = row;
      r.provenance = "augmented:" + op.name;
      r.clipped = a.clipped;
      r.path = "profiles/augmented/" + row.id.str() + "@" + op.name + ".png";
      store(r, a.mask);
      out.rows.push_back(std::move(r));
    }
  }
  return out;
}

inline nlohmann::json to_json(const Manifest& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : m.rows) {
    nlohmann::json j{{"id", r.id.str()}, {"path", r.path}, {"split", to_string(r.split)}, {"provenance", r.provenance}};
    if (r.clipped) j["clipped"] = true;
    rows.push_back(std::move(j));
  }
  return {{"schema_version", kManifestSchema},
          {"seed", m.seed},
          {"image_size", m.image_size},
          {"test_fraction", m.test_fraction},
          {"rows", rows}};
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
  Manifest m;
  try {
    if (j.at("schema_version").get<int>() != kManifestSchema) throw DataError("unsupported manifest schema version");
    m.seed = j.at("seed").get<std::uint64_t>();
    m.image_size = j.at("image_size").get<std::size_t>();
    m.test_fraction = j.at("test_fraction").get<double>();
    std::map<std::string, Split> source_split;
    for (const auto& r : j.at("rows")) {
      ManifestRow row;
      row.id = parse_profile_id(r.at("id").get<std::string>());
      row.path = r.at("path").get<std::string>();
      row.split = parse_split(r.at("split").get<std::string>());
      row.provenance = r.at("provenance").get<std::string>();
      row.clipped = r.value("clipped", false);
      if (row.is_original()) {
        source_split[row.id.str()] = row.split;
      } else if (row.provenance.rfind("augmented:", 0) != 0) {
        throw DataError("bad provenance tag '" + row.provenance + "'");
      } else {
        const auto it = source_split.find(row.id.str());
        if (it == source_split.end()) throw DataError("augmented row '" + row.key() + "' has no original row before it");
        if (it->second != row.split) throw DataError("augmented row '" + row.key() + "' crosses the split of its source");
      }
      m.rows.push_back(std::move(row));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
  return m;
}

inline void write_manifest(const std::filesystem::path& path, const Manifest& m) { write_json(path, to_json(m)); }
inline Manifest read_manifest(const std::filesystem::path& path) { return manifest_from_json(read_json(path)); }

}  // namespace sherdmatch::shape
