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
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sherdmatch/cluster/analysis.hpp"
#include "sherdmatch/cluster/dendrogram_io.hpp"
#include "sherdmatch/errors.hpp"
#include "sherdmatch/eval/robustness.hpp"
#include "sherdmatch/json_io.hpp"
#include "sherdmatch/shape/manifest.hpp"
#include "sherdmatch/shape/png_io.hpp"
#include "sherdmatch/shape/synth.hpp"
#include "sherdmatch/vae/checkpoint.hpp"
#include "sherdmatch/vae/features.hpp"
#include "sherdmatch/vae/trainer.hpp"

// Run directory layout:
//   manifest.json            rows: id, path, split, provenance
//   families.json            ground-truth families when the input was synthetic
//   profiles/<id>.png        normalized negative masks; augmented/ holds variants
//   checkpoint.bin           model, optimiser and RNG state
//   features.csv (+ .json)   profile_id,z0..z{2k-1} for every original
//   dendrogram.json          selected tree
//   selection.csv            all 28 method/metric scores
//   seeds.json               paired-leaf merges, tied to dendrogram.json by hash
//   reports/                 training log, robustness, reconstruction, summary
//   effective_config.json    configuration actually used
//   run.log                  timestamped progress; the only time-dependent file

namespace sherdmatch::pipeline {

namespace fs = std::filesystem;

inline constexpr int kConfigSchema = 1;

struct PipelineConfig {
  vae::VaeConfig vae;
  std::uint64_t seed = 7;  // split, evaluation and perturbation seed
  double test_fraction = 0.1;
  int threads = 1;
  bool quiet = false;
};

inline nlohmann::json to_json(const PipelineConfig& c) {
  return {{"schema_version", kConfigSchema}, {"seed", c.seed}, {"test_fraction", c.test_fraction},
          {"vae", vae::to_json(c.vae)}};
}

/// Overlays a config document onto `base`. Unknown keys are rejected.
inline PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig base = {}) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  PipelineConfig c = base;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "schema_version") {
        if (v.get<int>() != kConfigSchema) throw ConfigError("unsupported config schema_version");
      } else if (key == "seed") {
        c.seed = v.get<std::uint64_t>();
      } else if (key == "test_fraction") {
        c.test_fraction = v.get<double>();
      } else if (key == "vae") {
        c.vae = vae::config_from_json(v, c.vae);
      } else {
        throw ConfigError("unknown config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!(c.test_fraction >= 0.0 && c.test_fraction < 1.0)) throw ConfigError("test_fraction must lie in [0, 1)");
  return c;
}

/// Appends a timestamped line to run.log (and stderr unless quiet).
class RunLog {
 public:
  RunLog(const fs::path& dir, bool quiet) : quiet_(quiet) {
    fs::create_directories(dir);
    out_.open(dir / "run.log", std::ios::app);
  }
  void operator()(const std::string& msg) {
    const std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    out_ << stamp << " " << msg << "\n";
    out_.flush();
    if (!quiet_) std::fprintf(stderr, "%s\n", msg.c_str());
  }

 private:
  bool quiet_;
  std::ofstream out_;
};

// ---------------------------------------------------------------- synth / prepare

struct SynthResult {
  std::size_t written = 0;
};

/// Writes rim drawings (dark on light, canvas resolution) and families.json.
inline SynthResult run_synth(const fs::path& out, const shape::SynthOptions& o) {
  fs::create_directories(out);
  const auto profiles = shape::generate_synthetic(o);
  nlohmann::json fam = nlohmann::json::object();
  for (const auto& p : profiles) {
    shape::write_drawing_png(out / p.id.filename(), shape::render_rim(p.params, o.canvas));
    fam[p.id.str()] = p.family;
  }
  write_json(out / "families.json", {{"schema_version", 1}, {"families", fam}});
  return {profiles.size()};
}

/// Normalizes a directory of drawings, splits originals, augments x5 and
/// writes the manifest.
inline shape::Manifest run_prepare(const fs::path& input, const fs::path& out, std::size_t image_size,
                                   std::uint64_t seed, double test_fraction) {
  if (!fs::is_directory(input)) throw MissingInputError("input directory '" + input.string() + "' does not exist");
  std::map<shape::ProfileId, fs::path> files;
  for (const auto& e : fs::directory_iterator(input)) {
    if (!e.is_regular_file() || e.path().extension() != ".png") continue;
    const auto id = shape::parse_profile_id(e.path().filename().string());
    if (!files.emplace(id, e.path()).second) throw DataError("duplicate profile id '" + id.str() + "'");
  }
  if (files.empty()) throw DataError("no .png profiles in '" + input.string() + "'");
  fs::create_directories(out / "profiles" / "augmented");

  std::vector<shape::ProfileId> ids;
  std::map<std::string, shape::Mask> masks;
  for (const auto& [id, path] : files) {
    shape::Mask m;
    try {
      m = shape::normalize(shape::read_png(path), image_size);
    } catch (const DataError& e) {
      throw DataError(path.filename().string() + ": " + e.what());
    }
    shape::write_mask_png(out / "profiles" / id.filename(), m);
    masks[id.str()] = std::move(m);
    ids.push_back(id);
  }
  const auto splits = shape::split_ids(ids, seed, test_fraction);
  shape::Manifest base;
  base.seed = seed;
  base.image_size = image_size;
  base.test_fraction = test_fraction;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    base.rows.push_back({ids[i], "profiles/" + ids[i].filename(), splits[i], "original", false});
  }
  const shape::Manifest full = shape::augment(
      base, [&](const shape::ManifestRow& r) { return masks.at(r.id.str()); },
      [&](const shape::ManifestRow& r, const shape::Mask& m) { shape::write_mask_png(out / r.path, m); });
  shape::write_manifest(out / "manifest.json", full);
  if (fs::exists(input / "families.json")) write_file(out / "families.json", read_file(input / "families.json"));
  return full;
}

inline std::vector<shape::Mask> load_masks(const fs::path& dir, const std::vector<const shape::ManifestRow*>& rows) {
  std::vector<shape::Mask> out;
  out.reserve(rows.size());
  for (const auto* r : rows) out.push_back(shape::read_mask_png(dir / r->path));
  return out;
}

// ---------------------------------------------------------------- train

struct TrainSummary {
  int epochs_run = 0;
  double seconds = 0.0;
  std::vector<vae::EpochLog> log;
};

template <typename T>
TrainSummary run_train(const fs::path& dir, const PipelineConfig& cfg, bool resume, RunLog& log) {
  const shape::Manifest man = shape::read_manifest(dir / "manifest.json");
  if (man.image_size != static_cast<std::size_t>(cfg.vae.image_size)) {
    throw ConfigError("manifest image_size " + std::to_string(man.image_size) + " differs from config image_size " +
                      std::to_string(cfg.vae.image_size));
  }
  const auto train_rows = man.select(shape::Split::kTrain);
  const auto test_rows = man.select(shape::Split::kTest);
  if (train_rows.empty()) throw DataError("manifest has no training rows");
  const auto train = eval::masks_to_tensor<T>(load_masks(dir, train_rows));
  const nn::Tensor<T> test = test_rows.empty() ? nn::Tensor<T>() : eval::masks_to_tensor<T>(load_masks(dir, test_rows));

  const fs::path ckpt = dir / "checkpoint.bin";
  std::unique_ptr<vae::TrainState<T>> state;
  const fs::path log_path = dir / "reports" / "train_log.json";
  if (resume && fs::exists(ckpt)) {
    state = std::make_unique<vae::TrainState<T>>(vae::load_checkpoint<T>(ckpt));
    if (vae::config_hash(state->model.config()) != vae::config_hash(cfg.vae)) {
      throw ConfigError("checkpoint was trained with a different configuration");
    }
    log("resuming from epoch " + std::to_string(state->epoch));
  } else {
    state = std::make_unique<vae::TrainState<T>>(cfg.vae);
    Rng init(Rng::mix(cfg.vae.rng_seed, 0x696e6974ULL));
    state->model.initialize(init);
  }
  nlohmann::json epochs = nlohmann::json::array();
  if (resume && fs::exists(log_path)) {
    for (const auto& e : read_json(log_path).at("epochs"))
      if (e.at("epoch").get<int>() <= state->epoch) epochs.push_back(e);
  }
  const auto write_log = [&] {
    write_json(log_path, {{"schema_version", 1}, {"config_hash", vae::config_hash(cfg.vae)}, {"epochs", epochs}});
  };
  fs::create_directories(dir / "reports");

  log("training: " + std::to_string(train.dim(0)) + " train rows, " +
      std::to_string(test.rank() ? test.dim(0) : 0) + " test rows, " +
      std::to_string(state->model.parameter_count()) + " parameters");
  const auto t0 = std::chrono::steady_clock::now();
  vae::TrainerOptions opts;
  opts.threads = cfg.threads;
  opts.on_epoch = [&](const vae::EpochLog& e) {
    epochs.push_back(vae::to_json(e));
    char buf[256];
    std::snprintf(buf, sizeof buf, "epoch %d/%d beta=%.3f elbo=%.3f (kl %.3f recon %.3f) grad %.3g/%.3g clipped %zu %.1fs",
                  e.epoch, cfg.vae.epochs, e.beta, e.train_running.elbo, e.train_running.kl_term,
                  e.train_running.recon_term, e.grad_norm_mean, e.grad_norm_max, e.clipped_steps, e.seconds);
    std::string msg = buf;
    if (e.test_eval) {
      std::snprintf(buf, sizeof buf, " | eval train %.3f test %.3f", e.train_eval->elbo, e.test_eval->elbo);
      msg += buf;
    }
    log(msg);
  };
  opts.on_checkpoint = [&](int epoch) {
    vae::save_checkpoint(ckpt, *state);
    write_log();
    log("checkpoint written at epoch " + std::to_string(epoch));
  };
  vae::Trainer<T> trainer(*state, train, test, opts);
  TrainSummary s;
  s.log = trainer.run();
  s.epochs_run = static_cast<int>(s.log.size());
  s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (s.epochs_run == 0) {
    vae::save_checkpoint(ckpt, *state);
    write_log();
  }
  return s;
}

// ---------------------------------------------------------------- encode

template <typename T>
vae::FeatureTable run_encode(const fs::path& dir, int threads) {
  const shape::Manifest man = shape::read_manifest(dir / "manifest.json");
  const auto state = vae::load_checkpoint<T>(dir / "checkpoint.bin");
  const auto rows = man.originals();
  if (rows.empty()) throw DataError("manifest has no original rows");
  vae::FeatureTable t;
  for (const auto* r : rows) t.ids.push_back(r->id.str());
  t.rows = vae::encode_features(state.model, eval::masks_to_tensor<T>(load_masks(dir, rows)), threads);
  vae::write_features(dir / "features.csv", t,
                      {{"schema_version", 1},
                       {"config_hash", vae::config_hash(state.model.config())},
                       {"checkpoint_sha256", file_sha256(dir / "checkpoint.bin")},
                       {"latent_dim", state.model.config().k}});
  return t;
}

// ---------------------------------------------------------------- cluster / seeds

inline cluster::SelectionResult run_cluster(const fs::path& features_csv, const fs::path& out) {
  const vae::FeatureTable t = vae::read_features(features_csv);
  auto sel = cluster::select_best(t.rows);
  fs::create_directories(out);
  cluster::DendrogramDocument doc{sel.dendrogram, t.ids, sel.cophenetic.coefficient};
  write_file(out / "dendrogram.json", cluster::export_dendrogram(doc));
  write_file(out / "selection.csv", cluster::selection_csv(sel.report));
  return sel;
}

inline std::vector<cluster::Seed> run_seeds(const fs::path& dendrogram_json, const fs::path& out) {
  const auto doc = cluster::read_dendrogram(dendrogram_json);
  const auto seeds = cluster::extract_seeds(doc.tree);
  write_json(out / "seeds.json", cluster::seeds_to_json(seeds, doc.leaf_ids, file_sha256(dendrogram_json)));
  return seeds;
}

// ---------------------------------------------------------------- evaluation

template <typename T>
eval::RobustnessReport run_robustness(const fs::path& dir, std::uint64_t seed, int threads, bool allow_untrained,
                                      eval::LatentNoise noise) {
  const shape::Manifest man = shape::read_manifest(dir / "manifest.json");
  const auto state = vae::load_checkpoint<T>(dir / "checkpoint.bin");
  if (state.epoch == 0 && !allow_untrained) {
    throw ConfigError("checkpoint has not been trained; pass --allow-untrained to evaluate it anyway");
  }
  const auto rows = man.originals();
  std::vector<std::string> ids;
  for (const auto* r : rows) ids.push_back(r->id.str());
  auto rep = eval::run_robustness(state.model, ids, load_masks(dir, rows), eval::standard_grid(), seed, threads, noise);
  fs::create_directories(dir / "reports");
  write_file(dir / "reports" / "robustness.csv", eval::robustness_csv(rep));
  write_json(dir / "reports" / "robustness.json", eval::to_json(rep));
  return rep;
}

template <typename T>
eval::ReconstructionReport run_eval(const fs::path& dir, int threads) {
  const shape::Manifest man = shape::read_manifest(dir / "manifest.json");
  const auto state = vae::load_checkpoint<T>(dir / "checkpoint.bin");
  std::vector<const shape::ManifestRow*> rows;
  std::vector<std::string> keys;
  std::vector<shape::Split> splits;
  for (const auto& r : man.rows) {
    rows.push_back(&r);
    keys.push_back(r.key());
    splits.push_back(r.split);
  }
  auto rep = eval::run_reconstruction_eval(state.model, keys, splits, load_masks(dir, rows), threads);
  fs::create_directories(dir / "reports");
  write_file(dir / "reports" / "reconstruction.csv", eval::reconstruction_csv(rep));
  write_json(dir / "reports" / "reconstruction.json", eval::to_json(rep));
  return rep;
}

// ---------------------------------------------------------------- report

/// Ground-truth agreement of the clustering, when families.json exists.
struct FamilyAgreement {
  bool available = false;
  double ari_at_families = 0.0;
  std::size_t clusters = 0;
  std::size_t seeds = 0;
  std::size_t intra_family_seeds = 0;
};

inline FamilyAgreement family_agreement(const fs::path& dir) {
  FamilyAgreement a;
  if (!fs::exists(dir / "families.json")) return a;
  const auto fam = read_json(dir / "families.json").at("families");
  const auto doc = cluster::read_dendrogram(dir / "dendrogram.json");
  std::vector<std::size_t> truth;
  std::set<std::size_t> distinct;
  for (const auto& id : doc.leaf_ids) {
    if (!fam.contains(id)) return a;
    truth.push_back(fam.at(id).get<std::size_t>());
    distinct.insert(truth.back());
  }
  a.available = true;
  a.clusters = distinct.size();
  a.ari_at_families = cluster::adjusted_rand_index(cluster::cut_clusters(doc.tree, a.clusters), truth);
  const auto seeds = cluster::extract_seeds(doc.tree);
  a.seeds = seeds.size();
  for (const auto& s : seeds) a.intra_family_seeds += truth[s.left] == truth[s.right] ? 1 : 0;
  return a;
}

inline nlohmann::json run_report(const fs::path& dir) {
  nlohmann::json j{{"schema_version", 1}};
  for (const char* name : {"reconstruction", "robustness"}) {
    const auto p = dir / "reports" / (std::string(name) + ".json");
    if (fs::exists(p)) j[name] = read_json(p);
  }
  if (fs::exists(dir / "dendrogram.json")) {
    const auto doc = cluster::read_dendrogram(dir / "dendrogram.json");
    j["clustering"] = {{"method", cluster::to_string(doc.tree.method)},
                       {"metric", cluster::to_string(doc.tree.metric)},
                       {"leaves", doc.tree.n},
                       {"cophenetic_coefficient", doc.coefficient ? nlohmann::json(*doc.coefficient) : nlohmann::json(nullptr)}};
    const auto fa = family_agreement(dir);
    if (fa.available) {
      j["families"] = {{"clusters", fa.clusters},
                       {"adjusted_rand_index", fa.ari_at_families},
                       {"seeds", fa.seeds},
                       {"intra_family_seeds", fa.intra_family_seeds}};
    }
  }
  if (fs::exists(dir / "seeds.json")) j["seeds"] = read_json(dir / "seeds.json").at("seeds").size();
  fs::create_directories(dir / "reports");
  write_json(dir / "reports" / "summary.json", j);
  return j;
}

}  // namespace sherdmatch::pipeline
