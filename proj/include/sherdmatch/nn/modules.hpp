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

#include <optional>
#include <span>
#include <vector>

#include "sherdmatch/nn/layers.hpp"

namespace sherdmatch::nn {

/// Per-call state for stochastic layers. In training mode every sample of
/// the batch draws from its own generator so results do not depend on how a
/// batch is grouped. With `reuse_masks` set, dropout replays the masks from
/// the previous forward pass (used for finite-difference checks).
struct ForwardContext {
  bool training = false;
  std::span<Rng> sample_rngs;
  bool reuse_masks = false;
};

template <typename T>
class Conv2dLayer {
 public:
  Conv2dLayer() = default;
  Conv2dLayer(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
              std::size_t stride, std::size_t padding, bool input_grad = true)
      : params({out_channels, in_channels, kernel, kernel}, {out_channels}),
        stride_(stride), padding_(padding), input_grad_(input_grad) {}

  Tensor<T> forward(const Tensor<T>& x) {
    return conv2d_forward(x, params, stride_, padding_, &cache_);
  }

  Tensor<T> backward(const Tensor<T>& g) {
    return detail::conv2d_backward_cols(g, cache_.input.shape(), cache_.cols, params, stride_,
                                        padding_, input_grad_);
  }

  void init(Rng& rng) {
    params.kaiming_uniform(params.weights.dim(1) * params.weights.dim(2) * params.weights.dim(3),
                           rng);
  }

  LayerParams<T> params;

 private:
  std::size_t stride_ = 1, padding_ = 0;
  bool input_grad_ = true;
  Conv2dCache<T> cache_;
};

template <typename T>
class TransposedConv2dLayer {
 public:
  TransposedConv2dLayer() = default;
  TransposedConv2dLayer(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                        std::size_t stride, std::size_t padding, std::size_t output_padding)
      : params({in_channels, out_channels, kernel, kernel}, {out_channels}),
        stride_(stride), padding_(padding), output_padding_(output_padding) {}

  Tensor<T> forward(const Tensor<T>& x) {
    input_ = x;
    return transposed_conv2d_forward(x, params, stride_, padding_, output_padding_);
  }

  Tensor<T> backward(const Tensor<T>& g) {
    return transposed_conv2d_backward(g, input_, params, stride_, padding_, output_padding_);
  }

  // Fan-in of a transposed convolution counts the input channels that reach
  // one output pixel through the stride pattern.
  void init(Rng& rng) {
    const std::size_t k = params.weights.dim(2);
    const std::size_t taps = (k + stride_ - 1) / stride_;
    params.kaiming_uniform(params.weights.dim(0) * taps * taps, rng);
  }

  LayerParams<T> params;

 private:
  std::size_t stride_ = 1, padding_ = 0, output_padding_ = 0;
  Tensor<T> input_;
};

template <typename T>
class DenseLayer {
 public:
  DenseLayer() = default;
  DenseLayer(std::size_t in_features, std::size_t out_features)
      : params({in_features, out_features}, {out_features}) {}

  Tensor<T> forward(const Tensor<T>& x) {
    input_ = x;
    return dense_forward(x, params);
  }
  Tensor<T> backward(const Tensor<T>& g) { return dense_backward(g, input_, params); }

  void init(Rng& rng) { params.kaiming_uniform(params.weights.dim(0), rng); }

  LayerParams<T> params;

 private:
  Tensor<T> input_;
};

template <typename T>
class EluLayer {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    output_ = elu_forward(x);
    return output_;
  }
  Tensor<T> backward(const Tensor<T>& g) { return elu_backward_from_output(g, output_); }

 private:
  Tensor<T> output_;
};

template <typename T>
class DropoutLayer {
 public:
  explicit DropoutLayer(double rate = 0.0) : rate_(rate) {}

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) {
    if (!ctx.training) {
      mask_ = Tensor<T>(x.shape(), T{1});
      return x;
    }
    if (ctx.reuse_masks && mask_.shape() == x.shape()) return x.hadamard(mask_);
    const std::size_t batch = x.dim(0);
    if (ctx.sample_rngs.size() != batch) {
      throw ShapeError("dropout: need one generator per sample");
    }
    if (!(rate_ >= 0.0 && rate_ < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
    const std::size_t per = x.size() / batch;
    AlignedVector<T> mask(x.size(), T{1});
    if (rate_ > 0.0) {
      for (std::size_t n = 0; n < batch; ++n)
        draw_dropout_mask(mask.data() + n * per, per, rate_, ctx.sample_rngs[n]);
    }
    mask_ = Tensor<T>(x.shape(), std::move(mask));
    return x.hadamard(mask_);
  }

  Tensor<T> backward(const Tensor<T>& g) { return dropout_backward(g, mask_); }

  double rate() const { return rate_; }

 private:
  double rate_;
  Tensor<T> mask_;
};

}  // namespace sherdmatch::nn
