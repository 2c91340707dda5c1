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
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "sherdmatch/errors.hpp"
#include "sherdmatch/nn/adam.hpp"
#include "sherdmatch/rng.hpp"
#include "sherdmatch/vae/checkpoint.hpp"
#include "sherdmatch/vae/loss.hpp"
#include "sherdmatch/vae/model.hpp"

namespace sherdmatch::vae {

/// Learning rate for epoch e in 1..T.
inline double learning_rate_at(const VaeConfig& c, int epoch) {
  if (c.lr_schedule == LrSchedule::kConstant) return c.learning_rate;
  const double t = static_cast<double>(epoch - 1) / static_cast<double>(c.epochs);
  return 0.5 * c.learning_rate * (1.0 + std::cos(std::numbers::pi * t));
}

struct EpochLog {
  int epoch = 0;
  double beta = 0.0;
  double learning_rate = 0.0;
  LossBreakdown train_running;  // mean over the epoch's training batches
  std::optional<LossBreakdown> train_eval;
  std::optional<LossBreakdown> test_eval;
  double grad_norm_mean = 0.0;  // before clipping
  double grad_norm_max = 0.0;
  std::size_t clipped_steps = 0;
  double seconds = 0.0;
};

inline nlohmann::json to_json(const LossBreakdown& l) {
  return {{"elbo", l.elbo}, {"kl", l.kl_term}, {"recon", l.recon_term}, {"beta", l.beta}, {"epoch", l.epoch}};
}

inline nlohmann::json to_json(const EpochLog& e) {
  nlohmann::json j{{"epoch", e.epoch},
                   {"beta", e.beta},
                   {"learning_rate", e.learning_rate},
                   {"train_running", to_json(e.train_running)},
                   {"grad_norm_mean", e.grad_norm_mean},
                   {"grad_norm_max", e.grad_norm_max},
                   {"clipped_steps", e.clipped_steps}};
  if (e.train_eval) j["train_eval"] = to_json(*e.train_eval);
  if (e.test_eval) j["test_eval"] = to_json(*e.test_eval);
  return j;
}

/// Copies rows `idx` of a [N, ...] tensor into a new batch.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& data, std::span<const std::size_t> idx) {
  nn::Shape shape = data.shape();
  const std::size_t per = data.size() / shape[0];
  shape[0] = idx.size();
  Tensor<T> out(shape);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= data.dim(0)) throw ShapeError("gather_rows: index out of range");
    std::copy_n(data.ptr() + idx[i] * per, per, out.ptr() + i * per);
  }
  return out;
}

inline std::vector<Rng> sample_generators(std::uint64_t seed, std::size_t first, std::size_t count) {
  std::vector<Rng> rngs;
  rngs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) rngs.emplace_back(Rng::mix(seed, first + i));
  return rngs;
}

struct TrainerOptions {
  int threads = 1;
  std::function<void(const EpochLog&)> on_epoch;
  // Called with the state after epochs that are due a checkpoint.
  std::function<void(int epoch)> on_checkpoint;
  int stop_after_epoch = 0;  // 0 = run to the configured epoch count
};

/// Mini-batch ADAM training over a fixed train/test split.
///
/// Each batch is cut into micro-batches of a fixed size. Every micro-batch
/// gets its gradient computed from zero and the results are summed in
/// micro-batch order, so the trajectory is identical for any thread count.
template <typename T>
class Trainer {
 public:
  Trainer(TrainState<T>& state, const Tensor<T>& train, const Tensor<T>& test, TrainerOptions opts = {})
      : state_(state), train_(train), test_(test), opts_(std::move(opts)) {
    if (train_.rank() == 0 || train_.dim(0) == 0) throw DataError("training set is empty");
    const std::size_t workers = static_cast<std::size_t>(std::max(1, opts_.threads));
    for (std::size_t w = 0; w < workers; ++w) replicas_.emplace_back(state_.model.config());
  }

  std::vector<EpochLog> run() {
    std::vector<EpochLog> logs;
    const VaeConfig& c = state_.model.config();
    const int last = opts_.stop_after_epoch > 0 ? std::min(opts_.stop_after_epoch, c.epochs) : c.epochs;
    while (state_.epoch < last) {
      logs.push_back(run_epoch(state_.epoch + 1));
      state_.epoch += 1;
      if (opts_.on_epoch) opts_.on_epoch(logs.back());
      const bool due = (c.checkpoint_every > 0 && state_.epoch % c.checkpoint_every == 0) ||
                       state_.epoch == c.epochs;
      if (due && opts_.on_checkpoint) opts_.on_checkpoint(state_.epoch);
    }
    return logs;
  }

  /// Mean inference-mode ELBO over `repeats` random subsamples.
  LossBreakdown evaluate(const Tensor<T>& data, double beta, std::uint64_t seed) {
    const VaeConfig& c = state_.model.config();
    Rng rng(seed);
    const std::size_t n = data.dim(0);
    const std::size_t m = std::min<std::size_t>(n, static_cast<std::size_t>(c.eval_subsample));
    std::vector<std::size_t> order(n);
    LossBreakdown total;
    for (int r = 0; r < c.eval_repeats; ++r) {
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
      rng.shuffle(order.begin(), order.end());
      const std::uint64_t batch_seed = rng.next_u64();
      const LossBreakdown l = forward_sum(data, std::span<const std::size_t>(order.data(), m), beta,
                                          batch_seed, /*training=*/false, /*grad=*/false);
      total.kl_term += l.kl_term / static_cast<double>(m);
      total.recon_term += l.recon_term / static_cast<double>(m);
    }
    total.beta = beta;
    total.kl_term /= c.eval_repeats;
    total.recon_term /= c.eval_repeats;
    total.elbo = beta * total.kl_term + total.recon_term;
    return total;
  }

 private:
  EpochLog run_epoch(int epoch) {
    const VaeConfig& c = state_.model.config();
    const auto t0 = std::chrono::steady_clock::now();
    EpochLog log;
    log.epoch = epoch;
    log.beta = beta_schedule(epoch, c.epochs, c.cycles, c.anneal_rate);
    log.learning_rate = learning_rate_at(c, epoch);

    const std::size_t n = train_.dim(0);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    state_.rng.shuffle(order.begin(), order.end());

    const auto bs = static_cast<std::size_t>(c.batch_size);
    double kl = 0.0, recon = 0.0;
    std::size_t batch_id = 0;
    for (std::size_t start = 0; start < n; start += bs, ++batch_id) {
      const std::size_t len = std::min(bs, n - start);
      const std::uint64_t batch_seed = state_.rng.next_u64();
      state_.model.zero_grad();
      const LossBreakdown l = forward_sum(train_, std::span<const std::size_t>(order.data() + start, len),
                                          log.beta, batch_seed, /*training=*/true, /*grad=*/true);
      const double elbo = log.beta * l.kl_term + l.recon_term;
      if (!std::isfinite(elbo)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_id));
      }
      const auto params = state_.model.parameters();
      const double norm = nn::clip_gradient_norm(params, c.grad_clip);
      log.grad_norm_mean += norm;
      log.grad_norm_max = std::max(log.grad_norm_max, norm);
      if (c.grad_clip > 0.0 && norm > c.grad_clip) ++log.clipped_steps;
      nn::adam_step(params, state_.adam, log.learning_rate);
      kl += l.kl_term;
      recon += l.recon_term;
    }
    log.grad_norm_mean /= static_cast<double>(std::max<std::size_t>(batch_id, 1));
    log.train_running.epoch = epoch;
    log.train_running.beta = log.beta;
    log.train_running.kl_term = kl / static_cast<double>(n);
    log.train_running.recon_term = recon / static_cast<double>(n);
    log.train_running.elbo = log.beta * log.train_running.kl_term + log.train_running.recon_term;

    if (epoch % c.eval_every == 0 || epoch == c.epochs) {
      const std::uint64_t eval_seed = Rng::mix(c.rng_seed, static_cast<std::uint64_t>(epoch));
      log.train_eval = evaluate(train_, log.beta, Rng::mix(eval_seed, 0));
      log.train_eval->epoch = epoch;
      if (test_.rank() > 0 && test_.dim(0) > 0) {
        log.test_eval = evaluate(test_, log.beta, Rng::mix(eval_seed, 1));
        log.test_eval->epoch = epoch;
      }
    }
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return log;
  }

  /// Sums per-sample KL and reconstruction terms over `idx`. With `grad`,
  /// the master gradients receive d(batch mean loss)/d(params).
  LossBreakdown forward_sum(const Tensor<T>& data, std::span<const std::size_t> idx, double beta,
                            std::uint64_t batch_seed, bool training, bool grad) {
    const VaeConfig& c = state_.model.config();
    const auto mb = static_cast<std::size_t>(c.micro_batch);
    const std::size_t parts = (idx.size() + mb - 1) / mb;
    const double scale = grad ? 1.0 / static_cast<double>(idx.size()) : 0.0;
    std::vector<LossBreakdown> losses(parts);
    std::vector<std::vector<T>> grads(grad ? parts : 0);

    const auto work = [&](std::size_t w) {
      Vae<T>& model = replicas_[w];
      model.copy_weights_from(state_.model);
      for (std::size_t p = w; p < parts; p += replicas_.size()) {
        const std::size_t first = p * mb;
        const std::size_t len = std::min(mb, idx.size() - first);
        Tensor<T> x = gather_rows(data, idx.subspan(first, len));
        auto rngs = sample_generators(batch_seed, first, len);
        ForwardContext ctx{training, rngs};
        if (grad) model.zero_grad();
        const LossBreakdown l = model.elbo_loss(x, beta, ctx, nullptr, scale);
        losses[p].kl_term = l.kl_term * static_cast<double>(len);
        losses[p].recon_term = l.recon_term * static_cast<double>(len);
        if (grad) grads[p] = flatten_grads(model);
      }
    };
    const std::size_t active = std::min(replicas_.size(), parts);
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < active; ++w) pool.emplace_back(work, w);
    work(0);
    for (auto& t : pool) t.join();

    LossBreakdown sum;
    for (std::size_t p = 0; p < parts; ++p) {
      sum.kl_term += losses[p].kl_term;
      sum.recon_term += losses[p].recon_term;
      if (grad) add_grads(state_.model, grads[p]);
    }
    return sum;
  }

  static std::vector<T> flatten_grads(Vae<T>& m) {
    std::vector<T> out;
    out.reserve(m.parameter_count());
    for (auto* p : m.parameters()) {
      out.insert(out.end(), p->grad_weights.data().begin(), p->grad_weights.data().end());
      out.insert(out.end(), p->grad_bias.data().begin(), p->grad_bias.data().end());
    }
    return out;
  }

  static void add_grads(Vae<T>& m, const std::vector<T>& g) {
    std::size_t pos = 0;
    for (auto* p : m.parameters()) {
      for (auto& v : p->grad_weights.data()) v += g[pos++];
      for (auto& v : p->grad_bias.data()) v += g[pos++];
    }
  }

  TrainState<T>& state_;
  const Tensor<T>& train_;
  const Tensor<T>& test_;
  TrainerOptions opts_;
  std::vector<Vae<T>> replicas_;
};

}  // namespace sherdmatch::vae
