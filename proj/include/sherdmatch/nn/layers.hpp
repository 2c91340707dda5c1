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

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <string>
#include <utility>

#include "sherdmatch/errors.hpp"
#include "sherdmatch/nn/tensor.hpp"
#include "sherdmatch/rng.hpp"

namespace sherdmatch::nn {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

/// Weights and bias of one layer together with their gradient accumulators.
template <typename T>
struct LayerParams {
  Tensor<T> weights;
  Tensor<T> bias;
  Tensor<T> grad_weights;
  Tensor<T> grad_bias;

  LayerParams() = default;
  LayerParams(Shape weight_shape, Shape bias_shape)
      : weights(weight_shape), bias(bias_shape), grad_weights(weight_shape), grad_bias(bias_shape) {}
  LayerParams(Tensor<T> w, Tensor<T> b)
      : weights(std::move(w)), bias(std::move(b)),
        grad_weights(weights.shape()), grad_bias(bias.shape()) {}

  void zero_grad() {
    grad_weights.zero();
    grad_bias.zero();
  }

  std::size_t count() const { return weights.size() + bias.size(); }

  /// Kaiming-uniform with fan-in scaling; bias zeroed.
  void kaiming_uniform(std::size_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& w : weights.data()) w = static_cast<T>(rng.uniform(-bound, bound));
    bias.zero();
  }
};

inline std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                                    std::size_t padding) {
  const auto padded = in + 2 * padding;
  if (padded < kernel || stride == 0) {
    throw ShapeError("convolution kernel " + std::to_string(kernel) +
                     " larger than padded input " + std::to_string(padded));
  }
  return (padded - kernel) / stride + 1;
}

inline std::size_t transposed_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                                          std::size_t padding, std::size_t output_padding) {
  const auto full = (in - 1) * stride + kernel + output_padding;
  if (full <= 2 * padding) throw ShapeError("transposed convolution output would be empty");
  return full - 2 * padding;
}

namespace detail {

/// Output columns [lo, hi) whose input column ow * stride + offset lies
/// inside [0, width).
inline std::pair<std::size_t, std::size_t> valid_span(std::ptrdiff_t offset, std::size_t stride,
                                                      std::size_t width, std::size_t out_w) {
  const auto s = static_cast<std::ptrdiff_t>(stride);
  const auto w = static_cast<std::ptrdiff_t>(width);
  std::ptrdiff_t lo = offset >= 0 ? 0 : (-offset + s - 1) / s;
  std::ptrdiff_t hi = w - 1 - offset < 0 ? 0 : (w - 1 - offset) / s + 1;
  hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(out_w));
  lo = std::min(lo, hi);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

/// Unfolds [N,C,H,W] patches into a [C*k*k, N*Ho*Wo] row-major matrix.
template <typename T>
void im2col(const T* image, std::size_t batch, std::size_t channels, std::size_t height,
            std::size_t width, std::size_t kernel, std::size_t stride, std::size_t padding,
            std::size_t out_h, std::size_t out_w, T* cols) {
  const std::size_t plane = out_h * out_w;
  const std::size_t ncols = batch * plane;
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ki = 0; ki < kernel; ++ki) {
      for (std::size_t kj = 0; kj < kernel; ++kj) {
        T* row = cols + ((c * kernel + ki) * kernel + kj) * ncols;
        const std::ptrdiff_t offset = static_cast<std::ptrdiff_t>(kj) - pad;
        const auto [lo, hi] = valid_span(offset, stride, width, out_w);
        for (std::size_t n = 0; n < batch; ++n) {
          const T* src = image + (n * channels + c) * height * width;
          T* dst = row + n * plane;
          for (std::size_t oh = 0; oh < out_h; ++oh) {
            T* d = dst + oh * out_w;
            const auto ih = static_cast<std::ptrdiff_t>(oh * stride + ki) - pad;
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(height)) {
              std::fill(d, d + out_w, T{0});
              continue;
            }
            const T* src_row = src + static_cast<std::size_t>(ih) * width;
            std::fill(d, d + lo, T{0});
            if (stride == 1) {
              std::copy_n(src_row + (static_cast<std::ptrdiff_t>(lo) + offset), hi - lo, d + lo);
            } else {
              const T* sp = src_row + (static_cast<std::ptrdiff_t>(lo * stride) + offset);
              for (std::size_t ow = lo; ow < hi; ++ow, sp += stride) d[ow] = *sp;
            }
            std::fill(d + hi, d + out_w, T{0});
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatter-adds the column matrix back into [N,C,H,W].
template <typename T>
void col2im(const T* cols, std::size_t batch, std::size_t channels, std::size_t height,
            std::size_t width, std::size_t kernel, std::size_t stride, std::size_t padding,
            std::size_t out_h, std::size_t out_w, T* image) {
  const std::size_t plane = out_h * out_w;
  const std::size_t ncols = batch * plane;
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ki = 0; ki < kernel; ++ki) {
      for (std::size_t kj = 0; kj < kernel; ++kj) {
        const T* row = cols + ((c * kernel + ki) * kernel + kj) * ncols;
        const std::ptrdiff_t offset = static_cast<std::ptrdiff_t>(kj) - pad;
        const auto [lo, hi] = valid_span(offset, stride, width, out_w);
        for (std::size_t n = 0; n < batch; ++n) {
          T* dst = image + (n * channels + c) * height * width;
          const T* src = row + n * plane;
          for (std::size_t oh = 0; oh < out_h; ++oh) {
            const auto ih = static_cast<std::ptrdiff_t>(oh * stride + ki) - pad;
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(height)) continue;
            T* dst_row = dst + static_cast<std::size_t>(ih) * width;
            const T* s = src + oh * out_w;
            if (stride == 1) {
              T* dp = dst_row + (static_cast<std::ptrdiff_t>(lo) + offset);
              for (std::size_t ow = lo; ow < hi; ++ow) *dp++ += s[ow];
            } else {
              T* dp = dst_row + (static_cast<std::ptrdiff_t>(lo * stride) + offset);
              for (std::size_t ow = lo; ow < hi; ++ow, dp += stride) *dp += s[ow];
            }
          }
        }
      }
    }
  }
}

/// [N, C, P] -> [C, N*P]
template <typename T>
void batch_to_channel_major(const T* src, std::size_t batch, std::size_t channels,
                            std::size_t plane, T* dst) {
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t c = 0; c < channels; ++c)
      std::copy_n(src + (n * channels + c) * plane, plane, dst + (c * batch + n) * plane);
}

/// [C, N*P] -> [N, C, P]
template <typename T>
void channel_to_batch_major(const T* src, std::size_t batch, std::size_t channels,
                            std::size_t plane, T* dst) {
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t c = 0; c < channels; ++c)
      std::copy_n(src + (c * batch + n) * plane, plane, dst + (n * channels + c) * plane);
}

template <typename T>
void check_conv_params(const LayerParams<T>& p, const char* what) {
  if (p.weights.rank() != 4 || p.weights.dim(2) != p.weights.dim(3)) {
    throw ShapeError(std::string(what) + " needs square 4-d kernel, got " +
                     shape_str(p.weights.shape()));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d: weights [C_out, C_in, n, n], bias [C_out]. Cross-correlation.

template <typename T>
struct Conv2dCache {
  Tensor<T> input;
  RowMatrix<T> cols;
};

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const LayerParams<T>& params,
                         std::size_t stride, std::size_t padding,
                         Conv2dCache<T>* cache = nullptr) {
  input.require_rank(4, "conv2d input");
  detail::check_conv_params(params, "conv2d");
  const auto& w = params.weights;
  const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), wd = input.dim(3);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin) {
    throw ShapeError("conv2d: input has " + std::to_string(cin) + " channels but kernel " +
                     shape_str(w.shape()) + " expects " + std::to_string(w.dim(1)));
  }
  if (params.bias.size() != cout) throw ShapeError("conv2d: bias length mismatch");
  const std::size_t oh = conv_output_size(h, k, stride, padding);
  const std::size_t ow = conv_output_size(wd, k, stride, padding);
  const std::size_t plane = oh * ow;
  const std::size_t rows = cin * k * k;

  RowMatrix<T> local;
  RowMatrix<T>& cols = cache ? cache->cols : local;
  cols.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n * plane));
  detail::im2col(input.ptr(), n, cin, h, wd, k, stride, padding, oh, ow, cols.data());

  ConstMatrixMap<T> wmat(w.ptr(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(rows));
  RowMatrix<T> out_mat(static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(n * plane));
  out_mat.noalias() = wmat * cols;
  for (std::size_t c = 0; c < cout; ++c) out_mat.row(static_cast<Eigen::Index>(c)).array() += params.bias[c];

  Tensor<T> out({n, cout, oh, ow});
  detail::channel_to_batch_major(out_mat.data(), n, cout, plane, out.ptr());
  if (cache) cache->input = input;
  return out;
}

namespace detail {

template <typename T>
Tensor<T> conv2d_backward_cols(const Tensor<T>& grad_out, const Shape& input_shape,
                               const RowMatrix<T>& cols, LayerParams<T>& params,
                               std::size_t stride, std::size_t padding, bool need_input_grad) {
  grad_out.require_rank(4, "conv2d grad_out");
  const std::size_t n = input_shape[0], cin = input_shape[1], h = input_shape[2],
                    wd = input_shape[3];
  const std::size_t cout = params.weights.dim(0), k = params.weights.dim(2);
  const std::size_t oh = conv_output_size(h, k, stride, padding);
  const std::size_t ow = conv_output_size(wd, k, stride, padding);
  if (grad_out.shape() != Shape{n, cout, oh, ow}) {
    throw ShapeError("conv2d backward: grad_out " + shape_str(grad_out.shape()) +
                     " does not match cached forward output " +
                     shape_str(Shape{n, cout, oh, ow}));
  }
  const std::size_t plane = oh * ow;
  const std::size_t rows = cin * k * k;
  const auto ecout = static_cast<Eigen::Index>(cout);
  const auto erows = static_cast<Eigen::Index>(rows);
  const auto encols = static_cast<Eigen::Index>(n * plane);

  RowMatrix<T> g(ecout, encols);
  batch_to_channel_major(grad_out.ptr(), n, cout, plane, g.data());

  MatrixMap<T> gw(params.grad_weights.ptr(), ecout, erows);
  gw.noalias() += g * cols.transpose();
  for (std::size_t c = 0; c < cout; ++c) params.grad_bias[c] += g.row(static_cast<Eigen::Index>(c)).sum();

  Tensor<T> grad_in(input_shape);
  if (need_input_grad) {
    ConstMatrixMap<T> wmat(params.weights.ptr(), ecout, erows);
    RowMatrix<T> dcols(erows, encols);
    dcols.noalias() = wmat.transpose() * g;
    col2im(dcols.data(), n, cin, h, wd, k, stride, padding, oh, ow, grad_in.ptr());
  }
  return grad_in;
}

}  // namespace detail

/// Gradients of conv2d_forward; accumulates into params' gradients and
/// returns the gradient with respect to the input.
template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& grad_out, const Tensor<T>& cached_input,
                          LayerParams<T>& params, std::size_t stride, std::size_t padding) {
  cached_input.require_rank(4, "conv2d cached input");
  detail::check_conv_params(params, "conv2d");
  const std::size_t k = params.weights.dim(2);
  const std::size_t oh = conv_output_size(cached_input.dim(2), k, stride, padding);
  const std::size_t ow = conv_output_size(cached_input.dim(3), k, stride, padding);
  if (cached_input.dim(1) != params.weights.dim(1)) {
    throw ShapeError("conv2d backward: cached input channels do not match kernel");
  }
  RowMatrix<T> cols(static_cast<Eigen::Index>(cached_input.dim(1) * k * k),
                    static_cast<Eigen::Index>(cached_input.dim(0) * oh * ow));
  detail::im2col(cached_input.ptr(), cached_input.dim(0), cached_input.dim(1),
                 cached_input.dim(2), cached_input.dim(3), k, stride, padding, oh, ow,
                 cols.data());
  return detail::conv2d_backward_cols(grad_out, cached_input.shape(), cols, params, stride,
                                      padding, true);
}

// ---------------------------------------------------------------------------
// Transposed conv2d: weights [C_in, C_out, n, n], bias [C_out]. The adjoint
// of conv2d with the same kernel tensor, plus bias.

template <typename T>
Tensor<T> transposed_conv2d_forward(const Tensor<T>& input, const LayerParams<T>& params,
                                    std::size_t stride, std::size_t padding,
                                    std::size_t output_padding) {
  input.require_rank(4, "transposed conv2d input");
  detail::check_conv_params(params, "transposed conv2d");
  const auto& w = params.weights;
  const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), wd = input.dim(3);
  if (w.dim(0) != cin) {
    throw ShapeError("transposed conv2d: input has " + std::to_string(cin) +
                     " channels but kernel " + shape_str(w.shape()) + " expects " +
                     std::to_string(w.dim(0)));
  }
  if (output_padding >= std::max<std::size_t>(stride, 1)) {
    throw ShapeError("transposed conv2d: output_padding must be smaller than stride");
  }
  const std::size_t cout = w.dim(1), k = w.dim(2);
  if (params.bias.size() != cout) throw ShapeError("transposed conv2d: bias length mismatch");
  const std::size_t oh = transposed_output_size(h, k, stride, padding, output_padding);
  const std::size_t ow = transposed_output_size(wd, k, stride, padding, output_padding);
  const std::size_t plane = h * wd;
  const auto erows = static_cast<Eigen::Index>(cout * k * k);
  const auto encols = static_cast<Eigen::Index>(n * plane);

  RowMatrix<T> x(static_cast<Eigen::Index>(cin), encols);
  detail::batch_to_channel_major(input.ptr(), n, cin, plane, x.data());
  ConstMatrixMap<T> wmat(w.ptr(), static_cast<Eigen::Index>(cin), erows);
  RowMatrix<T> cols(erows, encols);
  cols.noalias() = wmat.transpose() * x;

  Tensor<T> out({n, cout, oh, ow});
  detail::col2im(cols.data(), n, cout, oh, ow, k, stride, padding, h, wd, out.ptr());
  const std::size_t oplane = oh * ow;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t c = 0; c < cout; ++c) {
      T* dst = out.ptr() + (b * cout + c) * oplane;
      for (std::size_t i = 0; i < oplane; ++i) dst[i] += params.bias[c];
    }
  return out;
}

template <typename T>
Tensor<T> transposed_conv2d_backward(const Tensor<T>& grad_out, const Tensor<T>& cached_input,
                                     LayerParams<T>& params, std::size_t stride,
                                     std::size_t padding, std::size_t output_padding,
                                     bool need_input_grad = true) {
  cached_input.require_rank(4, "transposed conv2d cached input");
  grad_out.require_rank(4, "transposed conv2d grad_out");
  const auto& w = params.weights;
  const std::size_t n = cached_input.dim(0), cin = cached_input.dim(1), h = cached_input.dim(2),
                    wd = cached_input.dim(3);
  const std::size_t cout = w.dim(1), k = w.dim(2);
  const std::size_t oh = transposed_output_size(h, k, stride, padding, output_padding);
  const std::size_t ow = transposed_output_size(wd, k, stride, padding, output_padding);
  if (grad_out.shape() != Shape{n, cout, oh, ow}) {
    throw ShapeError("transposed conv2d backward: grad_out " + shape_str(grad_out.shape()) +
                     " does not match cached forward output " + shape_str(Shape{n, cout, oh, ow}));
  }
  const std::size_t plane = h * wd;
  const auto erows = static_cast<Eigen::Index>(cout * k * k);
  const auto encols = static_cast<Eigen::Index>(n * plane);
  const auto ecin = static_cast<Eigen::Index>(cin);

  RowMatrix<T> cols(erows, encols);
  detail::im2col(grad_out.ptr(), n, cout, oh, ow, k, stride, padding, h, wd, cols.data());

  RowMatrix<T> x(ecin, encols);
  detail::batch_to_channel_major(cached_input.ptr(), n, cin, plane, x.data());
  MatrixMap<T> gw(params.grad_weights.ptr(), ecin, erows);
  gw.noalias() += x * cols.transpose();

  const std::size_t oplane = oh * ow;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t c = 0; c < cout; ++c) {
      const T* src = grad_out.ptr() + (b * cout + c) * oplane;
      T acc{0};
      for (std::size_t i = 0; i < oplane; ++i) acc += src[i];
      params.grad_bias[c] += acc;
    }

  Tensor<T> grad_in(cached_input.shape());
  if (need_input_grad) {
    ConstMatrixMap<T> wmat(w.ptr(), ecin, erows);
    RowMatrix<T> gx(ecin, encols);
    gx.noalias() = wmat * cols;
    detail::channel_to_batch_major(gx.data(), n, cin, plane, grad_in.ptr());
  }
  return grad_in;
}

// ---------------------------------------------------------------------------
// Dense: x [N, D] * W [D, K] + b [K].

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const LayerParams<T>& params) {
  x.require_rank(2, "dense input");
  const auto& w = params.weights;
  if (w.rank() != 2 || w.dim(0) != x.dim(1)) {
    throw ShapeError("dense: input " + shape_str(x.shape()) + " incompatible with weights " +
                     shape_str(w.shape()));
  }
  const auto n = static_cast<Eigen::Index>(x.dim(0));
  const auto d = static_cast<Eigen::Index>(w.dim(0));
  const auto k = static_cast<Eigen::Index>(w.dim(1));
  Tensor<T> y({x.dim(0), w.dim(1)});
  MatrixMap<T> ym(y.ptr(), n, k);
  ym.noalias() = ConstMatrixMap<T>(x.ptr(), n, d) * ConstMatrixMap<T>(w.ptr(), d, k);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < k; ++c) ym(r, c) += params.bias[static_cast<std::size_t>(c)];
  return y;
}

template <typename T>
Tensor<T> dense_backward(const Tensor<T>& grad_out, const Tensor<T>& cached_input,
                         LayerParams<T>& params) {
  const auto n = static_cast<Eigen::Index>(cached_input.dim(0));
  const auto d = static_cast<Eigen::Index>(params.weights.dim(0));
  const auto k = static_cast<Eigen::Index>(params.weights.dim(1));
  if (grad_out.shape() != Shape{cached_input.dim(0), params.weights.dim(1)}) {
    throw ShapeError("dense backward: grad_out " + shape_str(grad_out.shape()) +
                     " does not match forward output");
  }
  ConstMatrixMap<T> g(grad_out.ptr(), n, k);
  ConstMatrixMap<T> x(cached_input.ptr(), n, d);
  MatrixMap<T>(params.grad_weights.ptr(), d, k).noalias() += x.transpose() * g;
  for (Eigen::Index c = 0; c < k; ++c) params.grad_bias[static_cast<std::size_t>(c)] += g.col(c).sum();
  Tensor<T> grad_in(cached_input.shape());
  MatrixMap<T>(grad_in.ptr(), n, d).noalias() =
      g * ConstMatrixMap<T>(params.weights.ptr(), d, k).transpose();
  return grad_in;
}

// ---------------------------------------------------------------------------
// eLU

template <typename T>
Tensor<T> elu_forward(const Tensor<T>& x, T alpha = T{1}) {
  Tensor<T> y = x;
  auto in = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>(x.ptr(), static_cast<Eigen::Index>(x.size()));
  auto out = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>(y.ptr(), static_cast<Eigen::Index>(y.size()));
  // Branch-free: for x > 0 the exponential term vanishes exactly.
  out = in.max(T{0}) + alpha * (in.min(T{0}).exp() - T{1});
  return y;
}

/// Gradient from the cached forward output: dy/dx = 1 for x > 0, else y + alpha.
template <typename T>
Tensor<T> elu_backward_from_output(const Tensor<T>& grad_out, const Tensor<T>& cached_output,
                                   T alpha = T{1}) {
  grad_out.require_same_shape(cached_output, "elu backward");
  Tensor<T> g(grad_out.shape());
  const auto n = static_cast<Eigen::Index>(g.size());
  Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> y(cached_output.ptr(), n);
  Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> gin(grad_out.ptr(), n);
  Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> gout(g.ptr(), n);
  if (alpha == T{1}) {
    // y + 1 > 1 exactly when y > 0, so the slope is min(y + 1, 1).
    gout = gin * (y + T{1}).min(T{1});
  } else {
    for (Eigen::Index i = 0; i < n; ++i) gout[i] = y[i] > T{0} ? gin[i] : gin[i] * (y[i] + alpha);
  }
  return g;
}

/// Gradient from the cached forward input.
template <typename T>
Tensor<T> elu_backward(const Tensor<T>& grad_out, const Tensor<T>& cached_input,
                       T alpha = T{1}) {
  grad_out.require_same_shape(cached_input, "elu backward");
  Tensor<T> g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const T x = cached_input[i];
    if (x <= T{0}) g[i] *= alpha * std::exp(x);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Inverted dropout.

/// Fills `count` entries with 0 (probability `rate`) or 1/(1-rate). Each
/// 64-bit draw yields four 16-bit uniforms, so `rate` is resolved to 2^-16.
template <typename T>
void draw_dropout_mask(T* mask, std::size_t count, double rate, Rng& rng) {
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  const auto threshold = static_cast<std::uint32_t>(std::llround(rate * 65536.0));
  std::uint16_t chunk[256];
  for (std::size_t base = 0; base < count; base += 256) {
    const std::size_t len = std::min<std::size_t>(256, count - base);
    for (std::size_t w = 0; w < (len + 3) / 4; ++w) {
      const std::uint64_t bits = rng.next_u64();
      std::memcpy(chunk + 4 * w, &bits, sizeof bits);
    }
    T* out = mask + base;
    for (std::size_t i = 0; i < len; ++i) {
      out[i] = chunk[i] >= threshold ? keep_scale : T{0};
    }
  }
}

template <typename T>
struct DropoutResult {
  Tensor<T> output;
  Tensor<T> mask;  // 0 or 1/(1-rate); all ones in inference mode
};

template <typename T>
DropoutResult<T> dropout_forward(const Tensor<T>& x, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  Tensor<T> mask(x.shape(), T{1});
  if (!training || rate == 0.0) return {x, std::move(mask)};
  draw_dropout_mask(mask.ptr(), mask.size(), rate, rng);
  return {x.hadamard(mask), std::move(mask)};
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& grad_out, const Tensor<T>& mask) {
  return grad_out.hadamard(mask);
}

}  // namespace sherdmatch::nn
