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
#include <span>
#include <string>
#include <vector>

#include "sherdmatch/errors.hpp"
#include "sherdmatch/nn/tensor.hpp"

namespace sherdmatch::vae {

template <typename T>
T sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

/// Closed-form KL(N(mu, exp(logvar)) || N(0, I)) summed over the latent
/// dimensions: -1/2 * sum(logvar + 1 - exp(logvar) - mu^2).
template <typename T>
T kl_loss(std::span<const T> mu, std::span<const T> logvar) {
  if (mu.size() != logvar.size()) throw ShapeError("kl_loss: mu and logvar lengths differ");
  T acc{0};
  for (std::size_t i = 0; i < mu.size(); ++i) {
    acc += logvar[i] + T{1} - std::exp(logvar[i]) - mu[i] * mu[i];
  }
  return T{-0.5} * acc;
}

/// Per-pixel Bernoulli negative log-likelihood in the overflow-free form
/// max(l, 0) - l * x + log(1 + exp(-|l|)).
template <typename T>
T stable_bce(T target, T logit) {
  return std::max(logit, T{0}) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

/// Reconstruction loss summed over pixels and averaged over the batch
/// (leading dimension). Targets must lie in [0, 1].
template <typename T>
T recon_loss(const nn::Tensor<T>& target, const nn::Tensor<T>& logits) {
  target.require_same_shape(logits, "recon_loss");
  if (target.rank() == 0) throw ShapeError("recon_loss: empty tensor");
  T acc{0};
  for (std::size_t i = 0; i < target.size(); ++i) {
    const T x = target[i];
    if (!(x >= T{0} && x <= T{1})) {
      throw DataError("recon_loss: target value " + std::to_string(static_cast<double>(x)) +
                      " outside [0, 1]");
    }
    acc += stable_bce(x, logits[i]);
  }
  return acc / static_cast<T>(target.dim(0));
}

/// Cyclical annealing weight for epoch e (1-based) of T, with M cycles and
/// ramp fraction R.
inline double beta_schedule(int epoch, int total_epochs, int cycles, double ramp) {
  if (total_epochs < 1 || cycles < 1 || !(ramp > 0.0 && ramp <= 1.0)) {
    throw ConfigError("beta_schedule: invalid (T, M, R)");
  }
  if (epoch < 1 || epoch > total_epochs) {
    throw ConfigError("beta_schedule: epoch " + std::to_string(epoch) + " outside [1, " +
                      std::to_string(total_epochs) + "]");
  }
  const int period = (total_epochs + cycles - 1) / cycles;
  const double tau = static_cast<double>((epoch - 1) % period) /
                     (static_cast<double>(total_epochs) / static_cast<double>(cycles));
  return tau <= ramp ? tau / ramp : 1.0;
}

/// Pixel-wise mean squared error between a target and sigmoid(logits).
template <typename T>
T mse_metric(std::span<const T> target, std::span<const T> logits) {
  if (target.size() != logits.size() || target.empty()) throw ShapeError("mse_metric: size mismatch");
  T acc{0};
  for (std::size_t i = 0; i < target.size(); ++i) {
    const T d = target[i] - sigmoid(logits[i]);
    acc += d * d;
  }
  return acc / static_cast<T>(target.size());
}

/// Soft IoU distance 1 - 2 sum(x p) / (sum x^2 + sum p^2) on probabilities.
template <typename T>
T iou_distance(std::span<const T> target, std::span<const T> probs) {
  if (target.size() != probs.size()) throw ShapeError("iou: size mismatch");
  T inter{0}, denom{0};
  for (std::size_t i = 0; i < target.size(); ++i) {
    inter += target[i] * probs[i];
    denom += target[i] * target[i] + probs[i] * probs[i];
  }
  if (denom == T{0}) return T{0};
  return T{1} - T{2} * inter / denom;
}

/// IoU distance between a target and sigmoid(logits).
template <typename T>
T iou_metric(std::span<const T> target, std::span<const T> logits) {
  if (target.size() != logits.size() || target.empty()) throw ShapeError("iou_metric: size mismatch");
  std::vector<T> probs(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) probs[i] = sigmoid(logits[i]);
  return iou_distance<T>(target, probs);
}

}  // namespace sherdmatch::vae
