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
#include <vector>

#include "sherdmatch/errors.hpp"
#include "sherdmatch/nn/layers.hpp"

namespace sherdmatch::nn {

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moments for a fixed list of parameter tensors.
template <typename T>
struct AdamState {
  AdamHyper hyper;
  std::uint64_t step = 0;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
};

template <typename T>
AdamState<T> make_adam_state(const std::vector<LayerParams<T>*>& params, AdamHyper hyper) {
  AdamState<T> state;
  state.hyper = hyper;
  for (const auto* p : params) {
    state.first_moment.emplace_back(p->weights.shape());
    state.first_moment.emplace_back(p->bias.shape());
    state.second_moment.emplace_back(p->weights.shape());
    state.second_moment.emplace_back(p->bias.shape());
  }
  return state;
}

namespace detail {

template <typename T>
void adam_update_tensor(Tensor<T>& value, Tensor<T>& grad, Tensor<T>& m, Tensor<T>& v,
                        double lr, const AdamHyper& h, double corr1, double corr2) {
  if (m.shape() != value.shape() || v.shape() != value.shape()) {
    throw ShapeError("adam: moment shape does not match parameter " + shape_str(value.shape()));
  }
  const T b1 = static_cast<T>(h.beta1), b2 = static_cast<T>(h.beta2);
  const T one_b1 = static_cast<T>(1.0 - h.beta1), one_b2 = static_cast<T>(1.0 - h.beta2);
  const T step = static_cast<T>(lr / corr1);
  const T inv_corr2 = static_cast<T>(1.0 / corr2);
  const T eps = static_cast<T>(h.epsilon);
  T* p = value.ptr();
  T* g = grad.ptr();
  T* mp = m.ptr();
  T* vp = v.ptr();
  for (std::size_t i = 0; i < value.size(); ++i) {
    mp[i] = b1 * mp[i] + one_b1 * g[i];
    vp[i] = b2 * vp[i] + one_b2 * g[i] * g[i];
    p[i] -= step * mp[i] / (std::sqrt(vp[i] * inv_corr2) + eps);
    g[i] = T{0};
  }
}

}  // namespace detail

/// One bias-corrected ADAM update over every parameter; zeroes the gradients.
/// `learning_rate` overrides the stored rate when a schedule is in use.
template <typename T>
void adam_step(const std::vector<LayerParams<T>*>& params, AdamState<T>& state,
               double learning_rate) {
  if (state.first_moment.size() != 2 * params.size()) {
    throw ShapeError("adam: state was built for a different parameter list");
  }
  ++state.step;
  const auto t = static_cast<double>(state.step);
  const double corr1 = 1.0 - std::pow(state.hyper.beta1, t);
  const double corr2 = 1.0 - std::pow(state.hyper.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    detail::adam_update_tensor(p.weights, p.grad_weights, state.first_moment[2 * i],
                               state.second_moment[2 * i], learning_rate, state.hyper, corr1,
                               corr2);
    detail::adam_update_tensor(p.bias, p.grad_bias, state.first_moment[2 * i + 1],
                               state.second_moment[2 * i + 1], learning_rate, state.hyper,
                               corr1, corr2);
  }
}

template <typename T>
void adam_step(const std::vector<LayerParams<T>*>& params, AdamState<T>& state) {
  adam_step(params, state, state.hyper.learning_rate);
}

/// Global L2 norm of every gradient, accumulated in double in parameter order.
template <typename T>
double gradient_norm(const std::vector<LayerParams<T>*>& params) {
  double sq = 0.0;
  for (const auto* p : params) {
    for (T g : p->grad_weights.data()) sq += static_cast<double>(g) * static_cast<double>(g);
    for (T g : p->grad_bias.data()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(sq);
}

/// Rescales all gradients so their global norm is at most `max_norm`
/// (0 disables). Returns the norm before clipping.
template <typename T>
double clip_gradient_norm(const std::vector<LayerParams<T>*>& params, double max_norm) {
  if (max_norm < 0.0) throw ConfigError("gradient clip norm must be non-negative");
  const double norm = gradient_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto scale = static_cast<T>(max_norm / norm);
    for (auto* p : params) {
      for (T& g : p->grad_weights.data()) g *= scale;
      for (T& g : p->grad_bias.data()) g *= scale;
    }
  }
  return norm;
}

}  // namespace sherdmatch::nn
