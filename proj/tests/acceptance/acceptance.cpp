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

// Acceptance run: one PASS/FAIL line per criterion. Exits nonzero if any fails.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <thread>

#include "sherdmatch/cluster/analysis.hpp"
#include "sherdmatch/cluster/distance.hpp"
#include "sherdmatch/cluster/linkage.hpp"
#include "sherdmatch/eval/robustness.hpp"
#include "sherdmatch/nn/modules.hpp"
#include "sherdmatch/pipeline.hpp"
#include "sherdmatch/vae/loss.hpp"
#include "sherdmatch/vae/model.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
namespace sm = sherdmatch;
namespace cl = sherdmatch::cluster;
using sm::Rng;
using sm::nn::LayerParams;
using sm::nn::Tensor;
using sm::oracle::fd_check;
using sm::oracle::random_tensor;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

int failures = 0;

void verdict(const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

void info(const std::string& msg) {
  std::printf("  info %s\n", msg.c_str());
  std::fflush(stdout);
}

LayerParams<double> random_params(const sm::nn::Shape& w, std::size_t bias, Rng& rng) {
  return LayerParams<double>(random_tensor(w, rng), random_tensor({bias}, rng));
}

// ---------------------------------------------------------------- gradients

void gradient_suite() {
  constexpr int kSeeds = 20;
  const auto t0 = Clock::now();
  std::map<std::string, double> worst;
  const auto note = [&](const std::string& layer, double e) { worst[layer] = std::max(worst[layer], e); };

  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(9100 + seed);
    const std::size_t k = 1 + 2 * rng.below(2), stride = 1 + (seed % 2), pad = rng.below(k / 2 + 1);
    const std::size_t h = k + 1 + rng.below(4), w = k + 1 + rng.below(4);
    const std::size_t ci = 1 + rng.below(3), co = 1 + rng.below(3), n = 1 + rng.below(2);
    auto p = random_params({co, ci, k, k}, co, rng);
    auto x = random_tensor({n, ci, h, w}, rng);
    const auto probe = random_tensor(sm::nn::conv2d_forward(x, p, stride, pad).shape(), rng);
    const auto loss = [&] { return sm::nn::conv2d_forward(x, p, stride, pad).dot(probe); };
    p.zero_grad();
    const auto gx = sm::nn::conv2d_backward(probe, x, p, stride, pad);
    note("conv2d", fd_check(x, gx, loss));
    note("conv2d", fd_check(p.weights, p.grad_weights, loss));
    note("conv2d", fd_check(p.bias, p.grad_bias, loss));
  }
  for (int seed = 0, done = 0; done < kSeeds; ++seed) {
    Rng rng(9200 + seed);
    const std::size_t k = 1 + 2 * rng.below(2), stride = 1 + (seed % 2), pad = rng.below(k / 2 + 1);
    const std::size_t op = stride == 2 ? rng.below(2) : 0;
    const std::size_t h = 2 + rng.below(4), w = 2 + rng.below(4);
    const std::size_t ci = 1 + rng.below(3), co = 1 + rng.below(3), n = 1 + rng.below(2);
    auto p = random_params({ci, co, k, k}, co, rng);
    auto x = random_tensor({n, ci, h, w}, rng);
    Tensor<double> out;
    try {
      out = sm::nn::transposed_conv2d_forward(x, p, stride, pad, op);
    } catch (const sm::ShapeError&) {
      continue;
    }
    ++done;
    const auto probe = random_tensor(out.shape(), rng);
    const auto loss = [&] { return sm::nn::transposed_conv2d_forward(x, p, stride, pad, op).dot(probe); };
    p.zero_grad();
    const auto gx = sm::nn::transposed_conv2d_backward(probe, x, p, stride, pad, op);
    note("transposed_conv2d", fd_check(x, gx, loss));
    note("transposed_conv2d", fd_check(p.weights, p.grad_weights, loss));
    note("transposed_conv2d", fd_check(p.bias, p.grad_bias, loss));
  }
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(9300 + seed);
    const std::size_t n = 1 + rng.below(4), d = 1 + rng.below(6), k = 1 + rng.below(6);
    auto p = random_params({d, k}, k, rng);
    auto x = random_tensor({n, d}, rng);
    const auto probe = random_tensor({n, k}, rng);
    const auto loss = [&] { return sm::nn::dense_forward(x, p).dot(probe); };
    p.zero_grad();
    const auto gx = sm::nn::dense_backward(probe, x, p);
    note("dense", fd_check(x, gx, loss));
    note("dense", fd_check(p.weights, p.grad_weights, loss));
    note("dense", fd_check(p.bias, p.grad_bias, loss));
  }
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(9400 + seed);
    auto x = random_tensor({2, 3, 4, 4}, rng, -3.0, 3.0);
    for (auto& v : x.data())
      if (std::abs(v) < 1e-3) v = 0.5;
    const auto probe = random_tensor(x.shape(), rng);
    const auto loss = [&] { return sm::nn::elu_forward(x).dot(probe); };
    note("elu", fd_check(x, sm::nn::elu_backward_from_output(probe, sm::nn::elu_forward(x)), loss));
  }
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(9500 + seed);
    auto x = random_tensor({2, 32}, rng);
    const auto probe = random_tensor(x.shape(), rng);
    sm::nn::DropoutLayer<double> layer(0.25);
    std::vector<Rng> rngs{Rng(seed), Rng(seed + 1000)};
    layer.forward(x, {true, rngs, false});
    const sm::nn::ForwardContext replay{true, rngs, true};
    const auto loss = [&] { return layer.forward(x, replay).dot(probe); };
    note("dropout", fd_check(x, layer.backward(probe), loss));
  }

  double elbo_worst = 0.0;
  for (int seed = 0; seed < 3; ++seed) {
    Rng rng(9600 + seed);
    sm::vae::VaeConfig c;
    c.image_size = 8;
    c.f = 1;
    c.k = 2;
    c.precision = sm::vae::Precision::kFloat64;
    sm::vae::Vae<double> m(c);
    m.initialize(rng);
    const std::size_t batch = 3;
    Tensor<double> x({batch, 1, 8, 8});
    for (auto& v : x.data()) v = rng.bernoulli(0.4) ? 1.0 : 0.0;
    const auto eps = random_tensor({batch, 2}, rng);
    std::vector<Rng> rngs{Rng(seed), Rng(seed + 10), Rng(seed + 20)};
    m.zero_grad();
    m.elbo_loss(x, 0.6, {true, rngs, false}, &eps, 1.0 / batch);
    const sm::nn::ForwardContext replay{true, rngs, true};
    const auto loss = [&] { return m.elbo_loss(x, 0.6, replay, &eps).elbo; };
    for (auto* p : m.parameters()) {
      const auto gw = p->grad_weights, gb = p->grad_bias;
      elbo_worst = std::max({elbo_worst, fd_check(p->weights, gw, loss), fd_check(p->bias, gb, loss)});
    }
  }

  bool ok = elbo_worst < 1e-3;
  std::string detail;
  for (const auto& [layer, e] : worst) {
    ok = ok && e < 1e-4;
    detail += layer + " " + fmt("%.2e", e) + ", ";
  }
  const double secs = since(t0);
  ok = ok && secs < 120.0;
  verdict("gradient-suite", ok, detail + "elbo " + fmt("%.2e", elbo_worst) + ", " + fmt("%.1f s", secs));
}

// ---------------------------------------------------------------- loss terms

void kl_oracle() {
  const auto t0 = Clock::now();
  Rng rng(31);
  constexpr std::size_t k = 4, samples = 1000000;
  double worst = 0.0;
  for (int pair = 0; pair < 10; ++pair) {
    std::vector<double> mu(k), lv(k);
    for (auto& v : mu) v = rng.uniform(-1.5, 1.5);
    for (auto& v : lv) v = rng.uniform(-1.5, 1.0);
    double acc = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
      double lr = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const double e = rng.normal();
        const double z = mu[j] + std::exp(0.5 * lv[j]) * e;
        lr += -0.5 * lv[j] - 0.5 * e * e + 0.5 * z * z;
      }
      acc += lr;
    }
    const double exact = sm::vae::kl_loss<double>(mu, lv);
    worst = std::max(worst, std::abs(acc / samples - exact) / exact);
  }
  const double secs = since(t0);
  verdict("kl-monte-carlo", worst < 0.01 && secs < 60.0,
          "max relative error " + fmt("%.4f", worst) + " over 10 pairs, " + fmt("%.1f s", secs));
}

void stable_loss() {
  Rng rng(41);
  double worst = 0.0;
  for (int i = 0; i < 200000; ++i) {
    const double l = rng.uniform(-20, 20), x = rng.uniform();
    const double p = 1.0 / (1.0 + std::exp(-l)), q = 1.0 / (1.0 + std::exp(l));
    worst = std::max(worst, std::abs(sm::vae::stable_bce(x, l) - (-(x * std::log(p) + (1 - x) * std::log(q)))));
  }
  bool finite = true;
  for (double l : {1000.0, -1000.0})
    for (double x : {0.0, 0.5, 1.0}) finite = finite && std::isfinite(sm::vae::stable_bce(x, l));
  verdict("stable-loss", worst < 1e-9 && finite,
          "max gap to naive form " + fmt("%.2e", worst) + ", logits +-1000 " + (finite ? "finite" : "NOT finite"));
}

void annealing_table() {
  const auto b = [](int e) { return sm::vae::beta_schedule(e, 1000, 4, 0.5); };
  bool ok = b(1) == 0.0 && b(126) == 1.0 && b(251) == 0.0;
  int bad = 0;
  for (int e = 1; e <= 1000; ++e) {
    const double tau = static_cast<double>((e - 1) % 250) / 250.0;
    const double want = tau <= 0.5 ? tau / 0.5 : 1.0;
    if (std::abs(b(e) - want) > 1e-15) ++bad;
  }
  for (int c = 0; c < 4; ++c) ok = ok && b(1 + 250 * c) == 0.0 && b(126 + 250 * c) == 1.0;
  verdict("annealing-table", ok && bad == 0,
          "anchors " + std::string(ok ? "ok" : "wrong") + ", " + std::to_string(bad) + " of 1000 epochs off the ramp");
}

// ---------------------------------------------------------------- linkage

void linkage_oracle() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t coph_mismatch = 0, combos = 0;
  for (int set = 0; set < 50; ++set) {
    Rng rng(5100 + set);
    std::vector<std::vector<double>> x(32, std::vector<double>(8));
    for (auto& row : x)
      for (auto& v : row) v = rng.uniform(-1.0, 1.0);
    for (auto metric : cl::all_metrics()) {
      const auto d = cl::pairwise_distances(x, metric);
      const auto full = sm::oracle::full_matrix(x, metric);
      for (auto method : cl::all_methods()) {
        const auto fast = cl::linkage(d, method);
        worst = std::max(worst, sm::oracle::dendrogram_gap(fast, sm::oracle::NaiveLinkage(full, method).run()));
        if (cl::cophenetic(d, fast).distances != sm::oracle::lca_cophenetic(fast)) ++coph_mismatch;
        ++combos;
      }
    }
  }
  const double secs = since(t0);
  verdict("linkage-oracle", worst < 1e-9 && coph_mismatch == 0 && secs < 300.0,
          std::to_string(combos) + " trees, worst height gap " + fmt("%.2e", worst) + ", " +
              std::to_string(coph_mismatch) + " cophenetic mismatches, " + fmt("%.1f s", secs));
}

// ---------------------------------------------------------------- desk pipeline

struct DeskRun {
  fs::path dir;
  double train_seconds = 0.0;
  double total_seconds = 0.0;
  sm::pipeline::TrainSummary train;
  sm::eval::ReconstructionReport recon;
  sm::eval::RobustnessReport robust;
  std::size_t pairs_scored = 0;
  sm::pipeline::FamilyAgreement families;
};

DeskRun desk_run(const fs::path& dir, int epochs, int threads, bool evaluate) {
  fs::remove_all(dir);
  DeskRun r;
  r.dir = dir;
  const auto t0 = Clock::now();
  sm::pipeline::PipelineConfig cfg;
  cfg.vae = sm::vae::VaeConfig::desk();
  cfg.vae.epochs = epochs;
  cfg.vae.cycles = std::min(cfg.vae.cycles, epochs);
  cfg.threads = threads;
  cfg.quiet = true;
  sm::pipeline::RunLog log(dir, true);

  sm::shape::SynthOptions so;
  so.count = 200;
  so.families = 4;
  so.seed = cfg.seed;
  sm::pipeline::run_synth(dir / "raw", so);
  sm::pipeline::run_prepare(dir / "raw", dir, 64, cfg.seed, cfg.test_fraction);
  std::fprintf(stderr, "[desk] training %d epochs in %s\n", epochs, dir.string().c_str());
  const auto tt = Clock::now();
  r.train = sm::pipeline::run_train<float>(dir, cfg, false, log);
  r.train_seconds = since(tt);
  sm::pipeline::run_encode<float>(dir, threads);
  const auto sel = sm::pipeline::run_cluster(dir / "features.csv", dir);
  r.pairs_scored = static_cast<std::size_t>(std::count_if(sel.report.table.begin(), sel.report.table.end(),
                                                          [](const auto& e) { return e.coefficient.has_value(); }));
  sm::pipeline::run_seeds(dir / "dendrogram.json", dir);
  r.total_seconds = since(t0);
  r.families = sm::pipeline::family_agreement(dir);
  if (evaluate) {
    std::fprintf(stderr, "[desk] evaluating\n");
    r.recon = sm::pipeline::run_eval<float>(dir, threads);
    r.robust = sm::pipeline::run_robustness<float>(dir, cfg.seed, threads, false, sm::eval::LatentNoise::kMultiplicative);
  }
  return r;
}

void desk_criterion(const DeskRun& r, int epochs, int threads) {
  bool ok = true;
  const auto check = [&](bool c, const std::string& what) {
    info(std::string(c ? "ok   " : "MISS ") + what);
    ok = ok && c;
  };
  const unsigned cores = std::thread::hardware_concurrency();
  check(epochs == 200, "epochs " + std::to_string(epochs));
  check(cores >= 4 && r.train_seconds <= 1200.0,
        "training " + fmt("%.0f s", r.train_seconds) + " on " + std::to_string(cores) + " core(s), " +
            std::to_string(threads) + " thread(s); budget 1200 s on 4 cores");
  const auto& mse = r.recon.mse.at("test");
  const auto& iou = r.recon.iou.at("test");
  check(mse.mean < 0.05, "test mean MSE " + fmt("%.4f", mse.mean) + " over " + std::to_string(mse.count) + " rows");
  check(iou.mean < 0.3, "test mean IoU distance " + fmt("%.4f", iou.mean));
  const sm::vae::EpochLog* last = nullptr;
  std::size_t clipped = 0;
  double largest = 0.0;
  for (const auto& e : r.train.log) {
    if (e.train_eval && e.test_eval) last = &e;
    clipped += e.clipped_steps;
    largest = std::max(largest, e.grad_norm_max);
  }
  info("gradient norm max " + fmt("%.3g", largest) + ", " + std::to_string(clipped) + " clipped steps");
  if (last) {
    check(last->test_eval->elbo <= 1.25 * last->train_eval->elbo,
          "epoch " + std::to_string(last->epoch) + " ELBO test " + fmt("%.2f", last->test_eval->elbo) + " / train " +
              fmt("%.2f", last->train_eval->elbo));
  } else {
    check(false, "no evaluated epoch in the training log");
  }
  check(r.pairs_scored == 28, std::to_string(r.pairs_scored) + " of 28 method/metric pairs scored");
  check(r.families.available && r.families.clusters == 4 && r.families.ari_at_families > 0.8,
        "adjusted Rand index at 4 clusters " + fmt("%.4f", r.families.ari_at_families));
  const double intra = r.families.seeds ? static_cast<double>(r.families.intra_family_seeds) / r.families.seeds : 0.0;
  check(r.families.seeds > 0 && r.families.seeds <= 100 && intra >= 0.7,
        std::to_string(r.families.seeds) + " seeds, " + fmt("%.1f%%", 100 * intra) + " intra-family");
  verdict("desk-end-to-end", ok, "pipeline " + fmt("%.0f s", r.total_seconds) + " wall");
}

void robustness_criterion(const DeskRun& r) {
  const sm::eval::SpecSummary* latent10 = nullptr;
  for (const auto& s : r.robust.per_spec) {
    info(s.perturbation + " top-1 " + fmt("%.3f", s.top1_rate) + " mean rank " + fmt("%.2f", s.mean_rank));
    if (s.perturbation == "latent0.1") latent10 = &s;
  }
  const bool ok = r.robust.top1_rate >= 0.9 && latent10 && r.robust.weakest == "latent0.1" && latent10->top1_rate > 0.75;
  verdict("robustness", ok,
          "overall top-1 " + fmt("%.3f", r.robust.top1_rate) + ", weakest " + r.robust.weakest +
              (latent10 ? ", latent0.1 " + fmt("%.3f", latent10->top1_rate) : std::string()));
}

// Eroded shapes should encode nearer their own original than to shapes of
// other families.
void erode_triples(const fs::path& dir, int threads) {
  const auto man = sm::shape::read_manifest(dir / "manifest.json");
  const auto state = sm::vae::load_checkpoint<float>(dir / "checkpoint.bin");
  const auto fam = sm::read_json(dir / "families.json").at("families");
  const auto rows = man.originals();
  const auto masks = sm::pipeline::load_masks(dir, rows);
  std::vector<sm::shape::Mask> eroded;
  for (const auto& m : masks) eroded.push_back(sm::eval::apply_spec(m, {sm::eval::PerturbationSpec::kErode, 3.0}, nullptr));
  const auto base = sm::vae::encode_features(state.model, sm::eval::masks_to_tensor<float>(masks), threads);
  const auto pert = sm::vae::encode_features(state.model, sm::eval::masks_to_tensor<float>(eroded), threads);
  const auto k = static_cast<std::size_t>(state.model.config().k);
  const auto mean = [k](const sm::vae::FeatureRow& r) { return std::vector<double>(r.begin(), r.begin() + static_cast<long>(k)); };
  std::size_t won = 0, total = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (eroded[i].empty()) continue;
    const auto zi = mean(pert[i]);
    const double own = cl::distance(zi, mean(base[i]), cl::Metric::kEuclidean);
    for (std::size_t j = 0; j < rows.size(); ++j) {
      if (fam.at(rows[j]->id.str()) == fam.at(rows[i]->id.str())) continue;
      won += own < cl::distance(zi, mean(base[j]), cl::Metric::kEuclidean) ? 1 : 0;
      ++total;
    }
  }
  info("erode3 posterior mean nearer its own shape than another family's in " +
       fmt("%.1f%%", total ? 100.0 * won / total : 0.0) + " of " + std::to_string(total) + " triples");
}

void determinism_criterion(const DeskRun& a, const DeskRun& b) {
  bool ok = true;
  std::string detail;
  for (const char* f : {"features.csv", "dendrogram.json", "seeds.json"}) {
    const bool same = sm::read_file(a.dir / f) == sm::read_file(b.dir / f);
    ok = ok && same;
    detail += std::string(f) + (same ? " identical, " : " DIFFERS, ");
  }
  detail.resize(detail.size() - 2);
  verdict("determinism", ok, detail);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sherdmatch acceptance run"};
  std::string work = "acceptance_work";
  int epochs = 200;
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  bool skip_desk = false;
  app.add_option("--work", work, "Scratch directory for the desk runs");
  app.add_option("--epochs", epochs, "Desk training epochs (criteria assume 200)")->check(CLI::PositiveNumber);
  app.add_option("--threads", threads)->check(CLI::PositiveNumber);
  app.add_flag("--skip-desk", skip_desk, "Only run the fast checks");
  CLI11_PARSE(app, argc, argv);

  try {
    gradient_suite();
    kl_oracle();
    stable_loss();
    annealing_table();
    linkage_oracle();
    if (!skip_desk) {
      const auto first = desk_run(fs::path(work) / "run1", epochs, threads, true);
      desk_criterion(first, epochs, threads);
      robustness_criterion(first);
      erode_triples(first.dir, threads);
      const auto second = desk_run(fs::path(work) / "run2", epochs, threads, false);
      determinism_criterion(first, second);
    }
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
