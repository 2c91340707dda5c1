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

#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sherdmatch/cluster/dendrogram_io.hpp"
#include "sherdmatch/errors.hpp"
#include "sherdmatch/json_io.hpp"
#include "sherdmatch/shape/manifest.hpp"
#include "sherdmatch/shape/png_io.hpp"
#include "sherdmatch/vae/checkpoint.hpp"
#include "sherdmatch/vae/features.hpp"

// Verdict log: one JSON object per line, appended in arrival order,
//   {"seq": n, "seed": "A~B", "status": "valid"|"invalid"|"undecided",
//    "known_in_corpus": bool, "reviewer": str, "timestamp": str}
// The current verdict of a seed is its last line; replaying the file from
// the start rebuilds the in-memory state exactly.

namespace sherdmatch::service {

namespace fs = std::filesystem;

inline constexpr const char* kVersion = "0.1.0";

struct Verdict {
  std::uint64_t seq = 0;
  std::string seed;
  std::string status;
  bool known_in_corpus = false;
  std::string reviewer;
  std::string timestamp;

  bool operator==(const Verdict&) const = default;
};

inline nlohmann::json to_json(const Verdict& v) {
  return {{"seq", v.seq},           {"seed", v.seed},         {"status", v.status},
          {"known_in_corpus", v.known_in_corpus}, {"reviewer", v.reviewer}, {"timestamp", v.timestamp}};
}

inline Verdict verdict_from_json(const nlohmann::json& j) {
  return {j.at("seq").get<std::uint64_t>(),  j.at("seed").get<std::string>(),     j.at("status").get<std::string>(),
          j.at("known_in_corpus").get<bool>(), j.at("reviewer").get<std::string>(), j.at("timestamp").get<std::string>()};
}

struct MatchStats {
  std::size_t total_seeds = 0, validated = 0, invalidated = 0, undecided = 0, known = 0, fresh = 0;
  bool operator==(const MatchStats&) const = default;
};

inline nlohmann::json to_json(const MatchStats& s) {
  return {{"total_seeds", s.total_seeds}, {"validated", s.validated}, {"invalidated", s.invalidated},
          {"undecided", s.undecided},     {"known", s.known},         {"new", s.fresh}};
}

/// Event-sourced verdict state: append-only history plus the latest verdict
/// per seed.
class VerdictStore {
 public:
  void apply(const Verdict& v) {
    history_.push_back(v);
    current_[v.seed] = v;
    next_seq_ = std::max(next_seq_, v.seq + 1);
  }

  std::optional<Verdict> current(const std::string& key) const {
    const auto it = current_.find(key);
    if (it == current_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t history_length(const std::string& key) const {
    std::size_t n = 0;
    for (const auto& v : history_) n += v.seed == key ? 1 : 0;
    return n;
  }

  const std::vector<Verdict>& history() const { return history_; }
  std::uint64_t next_seq() const { return next_seq_; }

  MatchStats stats(const std::vector<std::string>& seed_keys) const {
    MatchStats s;
    s.total_seeds = seed_keys.size();
    for (const auto& key : seed_keys) {
      const auto v = current(key);
      if (!v || v->status == "undecided") {
        ++s.undecided;
      } else if (v->status == "valid") {
        ++s.validated;
        ++(v->known_in_corpus ? s.known : s.fresh);
      } else {
        ++s.invalidated;
      }
    }
    return s;
  }

  /// Rebuilds state from a log file; a missing file is an empty log.
  static VerdictStore replay(const fs::path& log) {
    VerdictStore st;
    if (!fs::exists(log)) return st;
    std::ifstream in(log);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.empty()) continue;
      try {
        st.apply(verdict_from_json(nlohmann::json::parse(line)));
      } catch (const nlohmann::json::exception& e) {
        throw IntegrityError("verdict log line " + std::to_string(n) + ": " + e.what());
      }
    }
    return st;
  }

 private:
  std::vector<Verdict> history_;
  std::map<std::string, Verdict> current_;
  std::uint64_t next_seq_ = 0;
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

inline Response json_response(int status, const nlohmann::json& j) { return {status, "application/json", canonical_dump(j)}; }
inline Response error_response(int status, const std::string& msg) {
  return json_response(status, {{"error", msg}, {"status", status}});
}

struct ServiceOptions {
  fs::path run_dir;
  fs::path verdict_log;  // defaults to <run_dir>/verdicts.jsonl
  std::function<std::string()> clock;  // timestamp source; defaults to UTC now
};

/// Request handling over a run directory's artifacts. Reads take a shared
/// lock; verdict posts are serialized and appended before state changes.
class Catalog {
 public:
  explicit Catalog(ServiceOptions opts) : opts_(std::move(opts)) {
    const fs::path& dir = opts_.run_dir;
    if (opts_.verdict_log.empty()) opts_.verdict_log = dir / "verdicts.jsonl";
    if (!opts_.clock) opts_.clock = [] {
      const std::time_t now = std::time(nullptr);
      char buf[32];
      std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
      return std::string(buf);
    };
    dendrogram_bytes_ = read_file(dir / "dendrogram.json");
    const auto doc = cluster::import_dendrogram(parse(dendrogram_bytes_, "dendrogram.json"));
    seeds_doc_ = read_json(dir / "seeds.json");
    const std::string expected = seeds_doc_.value("dendrogram_sha256", "");
    hashes_["dendrogram.json"] = sha256_hex(dendrogram_bytes_);
    hashes_["seeds.json"] = file_sha256(dir / "seeds.json");
    if (expected != hashes_["dendrogram.json"]) {
      throw IntegrityError("seeds.json was built from a different dendrogram.json (hash mismatch)");
    }
    for (const auto& id : doc.leaf_ids) profiles_.insert(id);
    for (const auto& s : seeds_doc_.at("seeds")) seed_keys_.push_back(s.at("key").get<std::string>());
    load_reconstruction(dir);
    verdicts_ = VerdictStore::replay(opts_.verdict_log);
    for (const auto& v : verdicts_.history()) {
      if (std::find(seed_keys_.begin(), seed_keys_.end(), v.seed) == seed_keys_.end()) {
        throw IntegrityError("verdict log refers to unknown seed '" + v.seed + "'");
      }
    }
  }

  Response dendrogram() const { return {200, "application/json", dendrogram_bytes_}; }

  Response seeds() const {
    std::shared_lock lock(mutex_);
    nlohmann::json list = nlohmann::json::array();
    for (const auto& s : seeds_doc_.at("seeds")) list.push_back(seed_entry(s));
    return json_response(200, {{"seeds", list}});
  }

  Response seed(const std::string& key) const {
    std::shared_lock lock(mutex_);
    for (const auto& s : seeds_doc_.at("seeds")) {
      if (s.at("key") != key) continue;
      nlohmann::json j = seed_entry(s);
      nlohmann::json hist = nlohmann::json::array();
      for (const auto& v : verdicts_.history())
        if (v.seed == key) hist.push_back(to_json(v));
      j["history"] = hist;
      return json_response(200, j);
    }
    return error_response(404, "unknown seed '" + key + "'");
  }

  Response profile_image(const std::string& id) const {
    if (!profiles_.count(id)) return error_response(404, "unknown profile '" + id + "'");
    const fs::path p = opts_.run_dir / "profiles" / (id + ".png");
    if (!fs::exists(p)) return error_response(404, "no image stored for profile '" + id + "'");
    return {200, "image/png", read_file(p)};
  }

  Response reconstruction(const std::string& id) const {
    if (!profiles_.count(id)) return error_response(404, "unknown profile '" + id + "'");
    if (!decoder_) return error_response(404, "no checkpoint/features available for reconstructions");
    const auto it = features_.find(id);
    if (it == features_.end()) return error_response(404, "no features stored for profile '" + id + "'");
    return {200, "image/png", decoder_(it->second)};
  }

  Response post_verdict(const std::string& key, const std::string& body) {
    if (std::find(seed_keys_.begin(), seed_keys_.end(), key) == seed_keys_.end()) {
      return error_response(404, "unknown seed '" + key + "'");
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
      return error_response(422, "verdict body is not valid JSON");
    }
    if (!j.is_object()) return error_response(422, "verdict body must be a JSON object");
    static const std::set<std::string> allowed{"status", "known_in_corpus", "reviewer"};
    for (const auto& [k, v] : j.items())
      if (!allowed.count(k)) return error_response(422, "unexpected field '" + k + "'");
    if (!j.contains("status") || !j["status"].is_string()) return error_response(422, "'status' must be a string");
    const auto status = j["status"].get<std::string>();
    if (status != "valid" && status != "invalid" && status != "undecided") {
      return error_response(422, "'status' must be valid, invalid or undecided");
    }
    if (j.contains("known_in_corpus") && !j["known_in_corpus"].is_boolean()) {
      return error_response(422, "'known_in_corpus' must be a boolean");
    }
    if (!j.contains("reviewer") || !j["reviewer"].is_string() || j["reviewer"].get<std::string>().empty()) {
      return error_response(422, "'reviewer' must be a non-empty string");
    }
    std::unique_lock lock(mutex_);
    Verdict v{verdicts_.next_seq(), key, status, j.value("known_in_corpus", false), j["reviewer"].get<std::string>(),
              opts_.clock()};
    {
      std::ofstream out(opts_.verdict_log, std::ios::app);
      out << canonical_dump(to_json(v)) << "\n";
      out.flush();
      if (!out) return error_response(500, "could not append to the verdict log");
    }
    verdicts_.apply(v);
    return json_response(201, to_json(v));
  }

  Response stats() const {
    std::shared_lock lock(mutex_);
    return json_response(200, to_json(verdicts_.stats(seed_keys_)));
  }

  Response health() const {
    nlohmann::json a = nlohmann::json::object();
    for (const auto& [k, v] : hashes_) a[k] = v;
    return json_response(200, {{"status", "ok"}, {"version", kVersion}, {"artifacts", a}});
  }

  MatchStats current_stats() const {
    std::shared_lock lock(mutex_);
    return verdicts_.stats(seed_keys_);
  }
  const std::vector<std::string>& seed_keys() const { return seed_keys_; }
  const fs::path& verdict_log() const { return opts_.verdict_log; }

 private:
  static nlohmann::json parse(const std::string& bytes, const std::string& what) {
    try {
      return nlohmann::json::parse(bytes);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(what + ": " + e.what());
    }
  }

  nlohmann::json seed_entry(const nlohmann::json& s) const {
    nlohmann::json j = s;
    const auto key = s.at("key").get<std::string>();
    const auto v = verdicts_.current(key);
    j["verdict"] = v ? to_json(*v) : nlohmann::json(nullptr);
    j["history_length"] = verdicts_.history_length(key);
    return j;
  }

  template <typename T>
  void make_decoder(const fs::path& ckpt) {
    auto state = std::make_shared<vae::TrainState<T>>(vae::load_checkpoint<T>(ckpt));
    decoder_ = [state](const vae::FeatureRow& row) {
      const auto k = static_cast<std::size_t>(state->model.config().k);
      const auto r = vae::decode_latent(state->model, std::span<const double>(row.data(), k));
      shape::Mask m(r.size, r.size);
      m.pixels = r.pixels;
      return shape::encode_png(m, true);
    };
  }

  void load_reconstruction(const fs::path& dir) {
    const fs::path ckpt = dir / "checkpoint.bin", feats = dir / "features.csv";
    if (!fs::exists(ckpt) || !fs::exists(feats)) return;
    hashes_["checkpoint.bin"] = file_sha256(ckpt);
    hashes_["features.csv"] = file_sha256(feats);
    const auto table = vae::read_features(feats);
    for (std::size_t i = 0; i < table.ids.size(); ++i) features_[table.ids[i]] = table.rows[i];
    if (vae::read_checkpoint_config(ckpt).precision == vae::Precision::kFloat64) {
      make_decoder<double>(ckpt);
    } else {
      make_decoder<float>(ckpt);
    }
  }

  ServiceOptions opts_;
  std::string dendrogram_bytes_;
  nlohmann::json seeds_doc_;
  std::vector<std::string> seed_keys_;
  std::set<std::string> profiles_;
  std::map<std::string, std::string> hashes_;
  std::map<std::string, vae::FeatureRow> features_;
  std::function<std::string(const vae::FeatureRow&)> decoder_;
  VerdictStore verdicts_;
  mutable std::shared_mutex mutex_;
};

}  // namespace sherdmatch::service
