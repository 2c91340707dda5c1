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

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "sherdmatch/errors.hpp"
#include "sherdmatch/json_io.hpp"

namespace sherdmatch::vae {

enum class LrSchedule { kConstant, kCosineDecay };
enum class Precision { kFloat64, kFloat32 };

/// Network, annealing and optimiser settings.
struct VaeConfig {
  int image_size = 64;
  int f = 4;             // log2 of the first layer's channel count
  int n = 3;             // kernel size
  int s = 1;             // base stride; down/up-sampling layers use s + 1
  int k = 16;            // latent dimension
  double dropout_rate = 0.25;
  int epochs = 200;      // T
  int cycles = 4;        // M
  double anneal_rate = 0.5;  // R
  double learning_rate = 1e-3;
  double grad_clip = 1e4;  // max global gradient norm per step; 0 = off
  int batch_size = 32;
  std::uint64_t rng_seed = 7;
  LrSchedule lr_schedule = LrSchedule::kConstant;
  Precision precision = Precision::kFloat32;
  // Gradients are computed on fixed-size groups of this many samples and
  // summed in order, so results do not depend on the thread count.
  int micro_batch = 8;
  int eval_every = 10;      // epochs between train/test ELBO evaluations
  int eval_subsample = 32;  // shapes per evaluation subsample
  int eval_repeats = 10;    // subsamples averaged per evaluation
  int checkpoint_every = 0; // 0 = only at the end

  int channels(int level) const { return 1 << (f + level); }
  int bottleneck_size() const { return image_size / 8; }

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (image_size < 8 || image_size % 8 != 0) fail("image_size must be a positive multiple of 8");
    if (f < 0 || f > 10) fail("f must lie in [0, 10]");
    if (n < 1 || n % 2 == 0) fail("n must be a positive odd kernel size");
    if (s != 1) fail("only s = 1 keeps the encoder/decoder spatial chain mirrored");
    if (k < 1) fail("k must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must lie in [0, 1)");
    if (cycles < 1) fail("cycles (M) must be >= 1");
    if (epochs < cycles) fail("epochs (T) must be >= cycles (M)");
    if (!(anneal_rate > 0.0 && anneal_rate <= 1.0)) fail("anneal_rate (R) must lie in (0, 1]");
    if (!(learning_rate >= 0.0)) fail("learning_rate must be non-negative");
    if (!(grad_clip >= 0.0)) fail("grad_clip must be non-negative");
    if (batch_size < 1) fail("batch_size must be positive");
    if (micro_batch < 1) fail("micro_batch must be positive");
    if (eval_every < 1) fail("eval_every must be positive");
    if (eval_subsample < 1 || eval_repeats < 1) fail("evaluation subsample settings must be positive");
    if (checkpoint_every < 0) fail("checkpoint_every must be non-negative");
  }

  /// Desk-scale preset: small images, small latent space.
  static VaeConfig desk() { return VaeConfig{}; }

  /// Full-size preset: 256 px input, k = 128, 1000 epochs.
  static VaeConfig full_size() {
    VaeConfig c;
    c.image_size = 256;
    c.k = 128;
    c.epochs = 1000;
    c.learning_rate = 1e-6;
    c.precision = Precision::kFloat32;
    return c;
  }
};

inline std::string to_string(LrSchedule s) {
  return s == LrSchedule::kConstant ? "constant" : "cosine_decay";
}
inline std::string to_string(Precision p) { return p == Precision::kFloat64 ? "float64" : "float32"; }

inline nlohmann::json to_json(const VaeConfig& c) {
  return nlohmann::json{{"image_size", c.image_size},
                        {"f", c.f},
                        {"n", c.n},
                        {"s", c.s},
                        {"k", c.k},
                        {"dropout_rate", c.dropout_rate},
                        {"epochs", c.epochs},
                        {"cycles", c.cycles},
                        {"anneal_rate", c.anneal_rate},
                        {"learning_rate", c.learning_rate},
                        {"grad_clip", c.grad_clip},
                        {"batch_size", c.batch_size},
                        {"rng_seed", c.rng_seed},
                        {"lr_schedule", to_string(c.lr_schedule)},
                        {"precision", to_string(c.precision)},
                        {"micro_batch", c.micro_batch},
                        {"eval_every", c.eval_every},
                        {"eval_subsample", c.eval_subsample},
                        {"eval_repeats", c.eval_repeats},
                        {"checkpoint_every", c.checkpoint_every}};
}

/// Overlays the keys present in `j` onto `base`; unknown keys are rejected.
inline VaeConfig config_from_json(const nlohmann::json& j, VaeConfig base = {}) {
  if (!j.is_object()) throw ConfigError("vae config must be a JSON object");
  VaeConfig c = base;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "image_size") c.image_size = v.get<int>();
      else if (key == "f") c.f = v.get<int>();
      else if (key == "n") c.n = v.get<int>();
      else if (key == "s") c.s = v.get<int>();
      else if (key == "k") c.k = v.get<int>();
      else if (key == "dropout_rate") c.dropout_rate = v.get<double>();
      else if (key == "epochs") c.epochs = v.get<int>();
      else if (key == "cycles") c.cycles = v.get<int>();
      else if (key == "anneal_rate") c.anneal_rate = v.get<double>();
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "grad_clip") c.grad_clip = v.get<double>();
      else if (key == "batch_size") c.batch_size = v.get<int>();
      else if (key == "rng_seed") c.rng_seed = v.get<std::uint64_t>();
      else if (key == "micro_batch") c.micro_batch = v.get<int>();
      else if (key == "eval_every") c.eval_every = v.get<int>();
      else if (key == "eval_subsample") c.eval_subsample = v.get<int>();
      else if (key == "eval_repeats") c.eval_repeats = v.get<int>();
      else if (key == "checkpoint_every") c.checkpoint_every = v.get<int>();
      else if (key == "lr_schedule") {
        const auto name = v.get<std::string>();
        if (name == "constant") c.lr_schedule = LrSchedule::kConstant;
        else if (name == "cosine_decay") c.lr_schedule = LrSchedule::kCosineDecay;
        else throw ConfigError("unknown lr_schedule '" + name + "'");
      } else if (key == "precision") {
        const auto name = v.get<std::string>();
        if (name == "float64") c.precision = Precision::kFloat64;
        else if (name == "float32") c.precision = Precision::kFloat32;
        else throw ConfigError("unknown precision '" + name + "'");
      } else {
        throw ConfigError("unknown vae config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("vae config: ") + e.what());
  }
  c.validate();
  return c;
}

/// SHA-256 of the canonical JSON form.
inline std::string config_hash(const VaeConfig& c) { return sha256_hex(canonical_dump(to_json(c))); }

}  // namespace sherdmatch::vae
