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
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sherdmatch/cluster/distance.hpp"
#include "sherdmatch/errors.hpp"
#include "sherdmatch/eval/common.hpp"
#include "sherdmatch/shape/manifest.hpp"
#include "sherdmatch/shape/raster.hpp"
#include "sherdmatch/vae/features.hpp"
#include "sherdmatch/vae/model.hpp"

namespace sherdmatch::eval {

struct PerturbationSpec {
  enum Kind { kIdentity, kErode, kDilate, kRotate, kLatent } kind = kIdentity;
  double magnitude = 0.0;  // pixels, degrees or fraction

  std::string name() const {
    char buf[48];
    switch (kind) {
      case kIdentity: return "identity";
      case kErode: std::snprintf(buf, sizeof buf, "erode%d", static_cast<int>(magnitude)); break;
      case kDilate: std::snprintf(buf, sizeof buf, "dilate%d", static_cast<int>(magnitude)); break;
      case kRotate: std::snprintf(buf, sizeof buf, "rotate%+g", magnitude); break;
      case kLatent: std::snprintf(buf, sizeof buf, "latent%g", magnitude); break;
    }
    return buf;
  }
};

/// Erode/dilate 3, 5, 7 px; rotate -5, -3, 3, 5 degrees; latent 1, 5, 10 %.
inline std::vector<PerturbationSpec> standard_grid() {
  std::vector<PerturbationSpec> g;
  for (double r : {3.0, 5.0, 7.0}) g.push_back({PerturbationSpec::kErode, r});
  for (double r : {3.0, 5.0, 7.0}) g.push_back({PerturbationSpec::kDilate, r});
  for (double a : {-5.0, -3.0, 3.0, 5.0}) g.push_back({PerturbationSpec::kRotate, a});
  for (double f : {0.01, 0.05, 0.10}) g.push_back({PerturbationSpec::kLatent, f});
  return g;
}

struct RobustnessRow {
  std::string shape_id;
  std::string perturbation;
  double feature_distance = 0.0;
  std::size_t rank = 0;
  double recon_iou = 0.0;
  bool clipped = false;
  bool dropped = false;  // erosion emptied the shape; counted as a miss
};

struct SpecSummary {
  std::string perturbation;
  double top1_rate = 0.0;
  double mean_rank = 0.0;
  double mean_distance = 0.0;
  std::size_t dropped = 0;
};

struct RobustnessReport {
  std::vector<RobustnessRow> rows;
  std::vector<SpecSummary> per_spec;
  double top1_rate = 0.0;
  double mean_rank = 0.0;
  std::string weakest;
};

/// 1 + number of other candidates at least as close as the true one.
inline std::size_t retrieval_rank(const std::vector<double>& query, const std::vector<vae::FeatureRow>& pool, std::size_t truth) {
  const double own = cluster::distance(query, pool[truth], cluster::Metric::kEuclidean);
  std::size_t rank = 1;
  for (std::size_t c = 0; c < pool.size(); ++c) {
    if (c != truth && cluster::distance(query, pool[c], cluster::Metric::kEuclidean) <= own) ++rank;
  }
  return rank;
}

inline shape::Mask apply_spec(const shape::Mask& m, const PerturbationSpec& s, bool* clipped) {
  switch (s.kind) {
    case PerturbationSpec::kErode: return shape::erode(m, static_cast<int>(s.magnitude));
    case PerturbationSpec::kDilate: return shape::dilate(m, static_cast<int>(s.magnitude));
    case PerturbationSpec::kRotate: {
      auto r = shape::rotate(m, s.magnitude);
      *clipped = r.clipped;
      return r.mask;
    }
    default: return m;
  }
}

/// Retrieval of each original among all originals from its perturbed
/// variant, on Euclidean distance between feature vectors.
template <typename T>
RobustnessReport run_robustness(const vae::Vae<T>& model, const std::vector<std::string>& ids,
                                const std::vector<shape::Mask>& originals, const std::vector<PerturbationSpec>& specs,
                                std::uint64_t seed, int threads = 1,
                                LatentNoise noise = LatentNoise::kMultiplicative) {
  if (ids.size() != originals.size() || originals.empty()) throw DataError("robustness: need one id per original image");
  const std::size_t n = originals.size();
  const auto k = static_cast<std::size_t>(model.config().k);
  const auto base = vae::encode_features(model, masks_to_tensor<T>(originals), threads);
  RobustnessReport rep;
  for (std::size_t si = 0; si < specs.size(); ++si) {
    const auto& spec = specs[si];
    std::vector<vae::FeatureRow> feats(n);
    std::vector<RobustnessRow> rows(n);
    if (spec.kind == PerturbationSpec::kLatent) {
      for (std::size_t i = 0; i < n; ++i) {
        Rng rng(Rng::mix(Rng::mix(seed, si), i));
        feats[i] = perturb_latent(base[i], spec.magnitude, rng, noise);
      }
    } else {
      std::vector<shape::Mask> variants(n);
      for (std::size_t i = 0; i < n; ++i) {
        variants[i] = apply_spec(originals[i], spec, &rows[i].clipped);
        rows[i].dropped = variants[i].empty();
      }
      feats = vae::encode_features(model, masks_to_tensor<T>(variants), threads);
    }
    SpecSummary sum;
    sum.perturbation = spec.name();
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      auto& r = rows[i];
      r.shape_id = ids[i];
      r.perturbation = sum.perturbation;
      r.feature_distance = cluster::distance(feats[i], base[i], cluster::Metric::kEuclidean);
      r.rank = r.dropped ? n : retrieval_rank(feats[i], base, i);
      const auto recon = vae::decode_latent(model, std::span<const double>(feats[i].data(), k));
      r.recon_iou = score_reconstruction(originals[i], recon).iou;
      if (r.rank == 1 && !r.dropped) ++hits;
      sum.mean_rank += static_cast<double>(r.rank) / static_cast<double>(n);
      sum.mean_distance += r.feature_distance / static_cast<double>(n);
      sum.dropped += r.dropped ? 1 : 0;
    }
    sum.top1_rate = static_cast<double>(hits) / static_cast<double>(n);
    rep.per_spec.push_back(sum);
    rep.rows.insert(rep.rows.end(), rows.begin(), rows.end());
  }
  if (!rep.rows.empty()) {
    std::size_t hits = 0;
    double ranks = 0;
    for (const auto& r : rep.rows) {
      hits += (r.rank == 1 && !r.dropped) ? 1 : 0;
      ranks += static_cast<double>(r.rank);
    }
    rep.top1_rate = static_cast<double>(hits) / static_cast<double>(rep.rows.size());
    rep.mean_rank = ranks / static_cast<double>(rep.rows.size());
    const auto* weakest = &rep.per_spec.front();
    for (const auto& s : rep.per_spec)
      if (s.top1_rate < weakest->top1_rate) weakest = &s;
    rep.weakest = weakest->perturbation;
  }
  return rep;
}

inline std::string robustness_csv(const RobustnessReport& r) {
  std::string out = "shape_id,perturbation,feature_distance,rank,recon_iou,flags\n";
  for (const auto& row : r.rows) {
    std::string flags = row.dropped ? "dropped" : "";
    if (row.clipped) flags += flags.empty() ? "clipped" : ";clipped";
    out += row.shape_id + "," + row.perturbation + "," + format_double(row.feature_distance) + "," +
           std::to_string(row.rank) + "," + format_double(row.recon_iou) + "," + flags + "\n";
  }
  return out;
}

inline nlohmann::json to_json(const RobustnessReport& r) {
  nlohmann::json specs = nlohmann::json::array();
  for (const auto& s : r.per_spec) {
    specs.push_back({{"perturbation", s.perturbation},
                     {"top1_rate", s.top1_rate},
                     {"mean_rank", s.mean_rank},
                     {"mean_distance", s.mean_distance},
                     {"dropped", s.dropped}});
  }
  return {{"schema_version", 1}, {"rows", r.rows.size()}, {"top1_rate", r.top1_rate},
          {"mean_rank", r.mean_rank}, {"weakest", r.weakest}, {"per_perturbation", specs}};
}

struct ReconstructionRow {
  std::string key;
  shape::Split split = shape::Split::kTrain;
  double mse = 0.0;
  double iou = 0.0;
};

struct ReconstructionReport {
  std::vector<ReconstructionRow> rows;
  std::map<std::string, BoxStats> mse;  // by split
  std::map<std::string, BoxStats> iou;
};

/// Decodes the posterior mean of every image and scores it against the input.
template <typename T>
ReconstructionReport run_reconstruction_eval(const vae::Vae<T>& model, const std::vector<std::string>& keys,
                                             const std::vector<shape::Split>& splits,
                                             const std::vector<shape::Mask>& masks, int threads = 1) {
  if (keys.size() != masks.size() || splits.size() != masks.size()) throw DataError("reconstruction eval: row count mismatch");
  ReconstructionReport rep;
  if (masks.empty()) return rep;
  const auto feats = vae::encode_features(model, masks_to_tensor<T>(masks), threads);
  const auto recons = vae::reconstruct(model, feats);
  std::map<std::string, std::vector<double>> mse, iou;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const ReconScore s = score_reconstruction(masks[i], recons[i]);
    rep.rows.push_back({keys[i], splits[i], s.mse, s.iou});
    mse[shape::to_string(splits[i])].push_back(s.mse);
    iou[shape::to_string(splits[i])].push_back(s.iou);
  }
  for (auto& [k, v] : mse) rep.mse[k] = box_stats(v);
  for (auto& [k, v] : iou) rep.iou[k] = box_stats(v);
  return rep;
}

inline std::string reconstruction_csv(const ReconstructionReport& r) {
  std::string out = "row,split,mse,iou\n";
  for (const auto& row : r.rows) {
    out += row.key + "," + shape::to_string(row.split) + "," + format_double(row.mse) + "," + format_double(row.iou) + "\n";
  }
  return out;
}

inline nlohmann::json to_json(const ReconstructionReport& r) {
  nlohmann::json j{{"schema_version", 1}, {"rows", r.rows.size()}, {"mse", nlohmann::json::object()}, {"iou", nlohmann::json::object()}};
  for (const auto& [k, b] : r.mse) j["mse"][k] = to_json(b);
  for (const auto& [k, b] : r.iou) j["iou"][k] = to_json(b);
  return j;
}

}  // namespace sherdmatch::eval
