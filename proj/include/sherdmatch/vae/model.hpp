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

#include <array>
#include <cmath>
#include <utility>
#include <vector>

#include "sherdmatch/nn/modules.hpp"
#include "sherdmatch/vae/config.hpp"
#include "sherdmatch/vae/loss.hpp"

namespace sherdmatch::vae {

using nn::ForwardContext;
using nn::LayerParams;
using nn::Tensor;

/// Posterior parameters and the reparametrised sample, each [N, k].
/// z = mu + exp(logvar / 2) * epsilon holds elementwise.
template <typename T>
struct LatentCode {
  Tensor<T> mu;
  Tensor<T> logvar;
  Tensor<T> epsilon;
  Tensor<T> z;
};

/// Batch-mean loss terms; elbo == beta * kl_term + recon_term.
struct LossBreakdown {
  double elbo = 0.0;
  double kl_term = 0.0;
  double recon_term = 0.0;
  double beta = 0.0;
  int epoch = 0;
};

/// z = mu + exp(logvar / 2) * epsilon.
template <typename T>
Tensor<T> reparametrize(const Tensor<T>& mu, const Tensor<T>& logvar, const Tensor<T>& epsilon) {
  mu.require_same_shape(logvar, "reparametrize");
  mu.require_same_shape(epsilon, "reparametrize");
  Tensor<T> z = mu;
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += std::exp(T{0.5} * logvar[i]) * epsilon[i];
  return z;
}

/// Convolutional VAE: a stride-1 stem, three down-sampling blocks
/// (conv stride 2 + eLU, conv + eLU, dropout), two dense heads for mu and
/// log-variance, and a mirrored decoder that ends in a single-channel
/// convolution producing logits.
template <typename T>
class Vae {
 public:
  explicit Vae(const VaeConfig& config) : config_(config) {
    config_.validate();
    const std::size_t n = static_cast<std::size_t>(config_.n);
    const std::size_t pad = n / 2;
    const std::size_t s = static_cast<std::size_t>(config_.s);
    const auto ch = [&](int level) { return static_cast<std::size_t>(config_.channels(level)); };

    stem_ = nn::Conv2dLayer<T>(1, ch(0), n, s, pad, /*input_grad=*/false);
    for (int b = 0; b < 3; ++b) {
      auto& blk = enc_[static_cast<std::size_t>(b)];
      blk.down = nn::Conv2dLayer<T>(ch(b), ch(b + 1), n, s + 1, pad);
      blk.same = nn::Conv2dLayer<T>(ch(b + 1), ch(b + 1), n, s, pad);
      blk.drop = nn::DropoutLayer<T>(config_.dropout_rate);
    }
    const std::size_t bs = static_cast<std::size_t>(config_.bottleneck_size());
    flat_ = ch(3) * bs * bs;
    const std::size_t k = static_cast<std::size_t>(config_.k);
    fc_mu_ = nn::DenseLayer<T>(flat_, k);
    fc_logvar_ = nn::DenseLayer<T>(flat_, k);
    fc_dec_ = nn::DenseLayer<T>(k, flat_);
    // dec_[b] undoes enc_[b]; executed from b = 2 down to 0.
    for (int b = 0; b < 3; ++b) {
      auto& blk = dec_[static_cast<std::size_t>(b)];
      blk.same = nn::Conv2dLayer<T>(ch(b + 1), ch(b + 1), n, s, pad);
      blk.up = nn::TransposedConv2dLayer<T>(ch(b + 1), ch(b), n, s + 1, pad, s);
      blk.drop = nn::DropoutLayer<T>(config_.dropout_rate);
    }
    head_ = nn::Conv2dLayer<T>(ch(0), 1, n, s, pad);
  }

  const VaeConfig& config() const { return config_; }

  void initialize(Rng& rng) {
    stem_.init(rng);
    for (auto& b : enc_) {
      b.down.init(rng);
      b.same.init(rng);
    }
    fc_mu_.init(rng);
    fc_logvar_.init(rng);
    fc_dec_.init(rng);
    for (int b = 2; b >= 0; --b) {
      dec_[static_cast<std::size_t>(b)].same.init(rng);
      dec_[static_cast<std::size_t>(b)].up.init(rng);
    }
    head_.init(rng);
  }

  /// Declaration order; also the checkpoint order.
  std::vector<LayerParams<T>*> parameters() {
    std::vector<LayerParams<T>*> out{&stem_.params};
    for (auto& b : enc_) {
      out.push_back(&b.down.params);
      out.push_back(&b.same.params);
    }
    out.push_back(&fc_mu_.params);
    out.push_back(&fc_logvar_.params);
    out.push_back(&fc_dec_.params);
    for (int b = 2; b >= 0; --b) {
      out.push_back(&dec_[static_cast<std::size_t>(b)].same.params);
      out.push_back(&dec_[static_cast<std::size_t>(b)].up.params);
    }
    out.push_back(&head_.params);
    return out;
  }

  std::vector<const LayerParams<T>*> parameters() const {
    auto ps = const_cast<Vae*>(this)->parameters();
    return {ps.begin(), ps.end()};
  }

  static std::vector<std::string> parameter_names() {
    return {"enc.stem",     "enc.block1.down", "enc.block1.conv", "enc.block2.down",
            "enc.block2.conv", "enc.block3.down", "enc.block3.conv", "enc.fc_mu",
            "enc.fc_logvar", "dec.fc",          "dec.block3.conv", "dec.block3.up",
            "dec.block2.conv", "dec.block2.up",  "dec.block1.conv", "dec.block1.up",
            "dec.head"};
  }

  std::size_t parameter_count() const {
    std::size_t total = 0;
    for (const auto* p : parameters()) total += p->count();
    return total;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  /// Copies weights (not gradients) from another model of the same config.
  void copy_weights_from(const Vae& other) {
    auto dst = parameters();
    auto src = other.parameters();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i]->weights = src[i]->weights;
      dst[i]->bias = src[i]->bias;
    }
  }

  /// Spatial sizes after the stem and after each down-sampling block.
  std::vector<std::size_t> encoder_spatial_chain() const {
    std::vector<std::size_t> chain{static_cast<std::size_t>(config_.image_size)};
    std::size_t sz = nn::conv_output_size(chain.back(), static_cast<std::size_t>(config_.n),
                                          static_cast<std::size_t>(config_.s),
                                          static_cast<std::size_t>(config_.n / 2));
    chain.push_back(sz);
    for (int b = 0; b < 3; ++b) {
      sz = nn::conv_output_size(sz, static_cast<std::size_t>(config_.n),
                                static_cast<std::size_t>(config_.s + 1),
                                static_cast<std::size_t>(config_.n / 2));
      chain.push_back(sz);
    }
    return chain;
  }

  /// Bottleneck feature map shape [C, H, W] feeding the dense heads.
  nn::Shape bottleneck_shape() const {
    const auto bs = static_cast<std::size_t>(config_.bottleneck_size());
    return {static_cast<std::size_t>(config_.channels(3)), bs, bs};
  }

  /// x [N, 1, S, S] -> (mu, logvar), each [N, k].
  std::pair<Tensor<T>, Tensor<T>> encode_forward(const Tensor<T>& x, const ForwardContext& ctx) {
    const auto sz = static_cast<std::size_t>(config_.image_size);
    if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != sz || x.dim(3) != sz) {
      throw ShapeError("encoder expects [N,1," + std::to_string(sz) + "," + std::to_string(sz) +
                       "], got " + nn::shape_str(x.shape()));
    }
    Tensor<T> h = stem_.forward(x);
    for (auto& b : enc_) {
      h = b.act_down.forward(b.down.forward(h));
      h = b.act_same.forward(b.same.forward(h));
      h = b.drop.forward(h, ctx);
    }
    const std::size_t batch = x.dim(0);
    h.reshape({batch, flat_});
    return {fc_mu_.forward(h), fc_logvar_.forward(h)};
  }

  void encode_backward(const Tensor<T>& grad_mu, const Tensor<T>& grad_logvar) {
    Tensor<T> g = fc_mu_.backward(grad_mu);
    g += fc_logvar_.backward(grad_logvar);
    const auto bs = static_cast<std::size_t>(config_.bottleneck_size());
    g.reshape({grad_mu.dim(0), static_cast<std::size_t>(config_.channels(3)), bs, bs});
    for (int b = 2; b >= 0; --b) {
      auto& blk = enc_[static_cast<std::size_t>(b)];
      g = blk.drop.backward(g);
      g = blk.same.backward(blk.act_same.backward(g));
      g = blk.down.backward(blk.act_down.backward(g));
    }
    stem_.backward(g);
  }

  /// z [N, k] -> logits [N, 1, S, S].
  Tensor<T> decode_forward(const Tensor<T>& z, const ForwardContext& ctx) {
    if (z.rank() != 2 || z.dim(1) != static_cast<std::size_t>(config_.k)) {
      throw ShapeError("decoder expects [N," + std::to_string(config_.k) + "], got " +
                       nn::shape_str(z.shape()));
    }
    Tensor<T> h = fc_dec_.forward(z);
    const auto bs = static_cast<std::size_t>(config_.bottleneck_size());
    h.reshape({z.dim(0), static_cast<std::size_t>(config_.channels(3)), bs, bs});
    for (int b = 2; b >= 0; --b) {
      auto& blk = dec_[static_cast<std::size_t>(b)];
      h = blk.act_same.forward(blk.same.forward(h));
      h = blk.act_up.forward(blk.up.forward(h));
      h = blk.drop.forward(h, ctx);
    }
    return head_.forward(h);
  }

  /// Returns the gradient with respect to z.
  Tensor<T> decode_backward(const Tensor<T>& grad_logits) {
    Tensor<T> g = head_.backward(grad_logits);
    for (auto& blk : dec_) {
      g = blk.drop.backward(g);
      g = blk.up.backward(blk.act_up.backward(g));
      g = blk.same.backward(blk.act_same.backward(g));
    }
    g.reshape({grad_logits.dim(0), flat_});
    return fc_dec_.backward(g);
  }

  /// One stochastic ELBO evaluation (a single epsilon draw per input).
  ///
  /// Epsilon comes from `frozen_epsilon` when given, otherwise from the
  /// per-sample generators in `ctx` (or zero when there are none). When
  /// `grad_scale` is non-zero, gradients of grad_scale * sum_i loss_i are
  /// accumulated into the parameters.
  LossBreakdown elbo_loss(const Tensor<T>& x, double beta, const ForwardContext& ctx,
                          const Tensor<T>* frozen_epsilon = nullptr, double grad_scale = 0.0,
                          LatentCode<T>* code_out = nullptr, Tensor<T>* logits_out = nullptr) {
    const std::size_t batch = x.dim(0);
    const std::size_t k = static_cast<std::size_t>(config_.k);
    auto [mu, logvar] = encode_forward(x, ctx);

    Tensor<T> eps({batch, k});
    if (frozen_epsilon) {
      frozen_epsilon->require_same_shape(eps, "frozen epsilon");
      eps = *frozen_epsilon;
    } else if (!ctx.sample_rngs.empty()) {
      if (ctx.sample_rngs.size() != batch) throw ShapeError("need one generator per sample");
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t j = 0; j < k; ++j)
          eps.at(n, j) = static_cast<T>(ctx.sample_rngs[n].normal());
    }
    Tensor<T> z = reparametrize(mu, logvar, eps);
    Tensor<T> logits = decode_forward(z, ctx);

    double kl_sum = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      kl_sum += static_cast<double>(kl_loss<T>(std::span<const T>(mu.ptr() + n * k, k),
                                               std::span<const T>(logvar.ptr() + n * k, k)));
    }
    const double recon_sum = static_cast<double>(recon_loss(x, logits)) * static_cast<double>(batch);

    LossBreakdown out;
    out.beta = beta;
    out.kl_term = kl_sum / static_cast<double>(batch);
    out.recon_term = recon_sum / static_cast<double>(batch);
    out.elbo = beta * out.kl_term + out.recon_term;

    if (grad_scale != 0.0) {
      const T scale = static_cast<T>(grad_scale);
      const T bscale = static_cast<T>(grad_scale * beta);
      Tensor<T> glogits(logits.shape());
      for (std::size_t i = 0; i < logits.size(); ++i) {
        glogits[i] = scale * (sigmoid(logits[i]) - x[i]);
      }
      Tensor<T> gz = decode_backward(glogits);
      Tensor<T> gmu = gz;
      Tensor<T> glogvar(logvar.shape());
      for (std::size_t i = 0; i < gz.size(); ++i) {
        const T ev = std::exp(logvar[i]);
        gmu[i] += bscale * mu[i];
        glogvar[i] = gz[i] * eps[i] * T{0.5} * std::sqrt(ev) + bscale * T{0.5} * (ev - T{1});
      }
      encode_backward(gmu, glogvar);
    }
    if (code_out) *code_out = {std::move(mu), std::move(logvar), std::move(eps), std::move(z)};
    if (logits_out) *logits_out = std::move(logits);
    return out;
  }

 private:
  struct EncoderBlock {
    nn::Conv2dLayer<T> down;
    nn::EluLayer<T> act_down;
    nn::Conv2dLayer<T> same;
    nn::EluLayer<T> act_same;
    nn::DropoutLayer<T> drop;
  };
  struct DecoderBlock {
    nn::Conv2dLayer<T> same;
    nn::EluLayer<T> act_same;
    nn::TransposedConv2dLayer<T> up;
    nn::EluLayer<T> act_up;
    nn::DropoutLayer<T> drop;
  };

  VaeConfig config_;
  std::size_t flat_ = 0;
  nn::Conv2dLayer<T> stem_;
  std::array<EncoderBlock, 3> enc_;
  nn::DenseLayer<T> fc_mu_, fc_logvar_, fc_dec_;
  std::array<DecoderBlock, 3> dec_;
  nn::Conv2dLayer<T> head_;
};

}  // namespace sherdmatch::vae
