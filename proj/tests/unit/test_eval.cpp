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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "sherdmatch/eval/common.hpp"
#include "sherdmatch/eval/robustness.hpp"

namespace sm = sherdmatch;
namespace ev = sherdmatch::eval;
using sm::Rng;
using sm::shape::Mask;

namespace {

sm::vae::VaeConfig small_config() {
  sm::vae::VaeConfig c;
  c.image_size = 16;
  c.f = 1;
  c.k = 3;
  c.precision = sm::vae::Precision::kFloat64;
  return c;
}

std::vector<Mask> random_masks(std::size_t n, Rng& rng) {
  std::vector<Mask> out;
  for (std::size_t i = 0; i < n; ++i) {
    Mask m(16, 16);
    const std::size_t y0 = 2 + rng.below(5), x0 = 2 + rng.below(5), h = 4 + rng.below(6), w = 4 + rng.below(6);
    for (std::size_t y = y0; y < std::min<std::size_t>(16, y0 + h); ++y)
      for (std::size_t x = x0; x < std::min<std::size_t>(16, x0 + w); ++x) m.at(y, x) = 1;
    out.push_back(m);
  }
  return out;
}

double order_stat_quantile(std::vector<double> v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
  const double a = v[lo];
  if (lo + 1 >= v.size()) return a;
  const double b = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo) + 1, v.end());
  return a + (pos - static_cast<double>(lo)) * (b - a);
}

}  // namespace

TEST(PerturbLatent, ZeroFractionIsIdentity) {
  Rng rng(1);
  const std::vector<double> z{0.5, -2.0, 3.25};
  EXPECT_EQ(ev::perturb_latent(z, 0.0, rng), z);
  EXPECT_EQ(ev::perturb_latent(z, 0.0, rng, ev::LatentNoise::kAdditive), z);
  EXPECT_THROW(ev::perturb_latent(z, -0.1, rng), sm::ConfigError);
}

TEST(PerturbLatent, MultiplicativeSpread) {
  Rng rng(2);
  const std::vector<double> ones(100000, 1.0);
  const auto out = ev::perturb_latent(ones, 0.05, rng);
  double mean = 0, var = 0;
  for (double v : out) mean += v;
  mean /= static_cast<double>(out.size());
  for (double v : out) var += (v - mean) * (v - mean);
  EXPECT_NEAR(std::sqrt(var / static_cast<double>(out.size() - 1)), 0.05, 0.002);
  EXPECT_NEAR(mean, 1.0, 0.002);
}

TEST(PerturbLatent, AdditiveNoiseNormTracksFraction) {
  Rng rng(3);
  std::vector<double> z(20000);
  for (auto& v : z) v = rng.uniform(-2, 2);
  const auto out = ev::perturb_latent(z, 0.1, rng, ev::LatentNoise::kAdditive);
  double nz = 0, nd = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    nz += z[i] * z[i];
    nd += (out[i] - z[i]) * (out[i] - z[i]);
  }
  EXPECT_NEAR(std::sqrt(nd / nz), 0.1, 0.005);
}

TEST(PerturbLatent, SeededRepeat) {
  const std::vector<double> z{1, 2, 3, 4};
  Rng a(9), b(9);
  EXPECT_EQ(ev::perturb_latent(z, 0.1, a), ev::perturb_latent(z, 0.1, b));
}

TEST(BoxStatsTest, HandExample) {
  const auto b = ev::box_stats({3, 100, 1, 4, 2});
  EXPECT_EQ(b.count, 5u);
  EXPECT_EQ(b.min, 1);
  EXPECT_EQ(b.q1, 2);
  EXPECT_EQ(b.median, 3);
  EXPECT_EQ(b.q3, 4);
  EXPECT_EQ(b.max, 100);
  EXPECT_EQ(b.whisker_low, 1);
  EXPECT_EQ(b.whisker_high, 4);
  EXPECT_DOUBLE_EQ(b.mean, 22);
  EXPECT_EQ(ev::box_stats({}).count, 0u);
}

TEST(BoxStatsTest, QuartilesMatchSelectionOracle) {
  for (int t = 0; t < 200; ++t) {
    Rng rng(100 + t);
    std::vector<double> v(1 + rng.below(50));
    for (auto& x : v) x = rng.uniform(-10, 10);
    const auto b = ev::box_stats(v);
    EXPECT_NEAR(b.q1, order_stat_quantile(v, 0.25), 1e-12);
    EXPECT_NEAR(b.median, order_stat_quantile(v, 0.5), 1e-12);
    EXPECT_NEAR(b.q3, order_stat_quantile(v, 0.75), 1e-12);
    EXPECT_LE(b.whisker_low, b.q1);
    EXPECT_GE(b.whisker_high, b.q3);
    EXPECT_GE(b.whisker_low, b.min);
    EXPECT_LE(b.whisker_high, b.max);
  }
}

TEST(RetrievalRank, TiesCountAgainstTheQuery) {
  const std::vector<sm::vae::FeatureRow> pool{{0, 0}, {1, 0}, {2, 0}};
  EXPECT_EQ(ev::retrieval_rank({0, 0}, pool, 0), 1u);
  EXPECT_EQ(ev::retrieval_rank({0.5, 0}, pool, 0), 2u);
  EXPECT_EQ(ev::retrieval_rank({0.4, 0}, pool, 0), 1u);
  EXPECT_EQ(ev::retrieval_rank({2, 0}, pool, 0), 3u);
}

TEST(Robustness, IdentityPerturbationRanksFirst) {
  Rng rng(4);
  sm::vae::Vae<double> m(small_config());
  m.initialize(rng);
  const auto masks = random_masks(12, rng);
  std::vector<std::string> ids;
  for (int i = 0; i < 12; ++i) ids.push_back("R-1." + std::to_string(i + 1));
  const auto rep = ev::run_robustness(m, ids, masks, {ev::PerturbationSpec{}, {ev::PerturbationSpec::kLatent, 0.0}}, 7);
  ASSERT_EQ(rep.rows.size(), 24u);
  for (const auto& r : rep.rows) {
    EXPECT_EQ(r.rank, 1u) << r.shape_id;
    EXPECT_EQ(r.feature_distance, 0.0);
  }
  EXPECT_EQ(rep.top1_rate, 1.0);
  EXPECT_EQ(rep.per_spec.size(), 2u);
}

TEST(Robustness, ReportIsSeedDeterministic) {
  Rng rng(5);
  sm::vae::Vae<double> m(small_config());
  m.initialize(rng);
  const auto masks = random_masks(8, rng);
  std::vector<std::string> ids(8, "R-1.1");
  const auto a = ev::run_robustness(m, ids, masks, ev::standard_grid(), 11, 1);
  const auto b = ev::run_robustness(m, ids, masks, ev::standard_grid(), 11, 2);
  EXPECT_EQ(ev::robustness_csv(a), ev::robustness_csv(b));
  EXPECT_EQ(a.per_spec.size(), 13u);
  const auto c = ev::run_robustness(m, ids, masks, ev::standard_grid(), 12, 1);
  EXPECT_NE(ev::robustness_csv(a), ev::robustness_csv(c));
}

TEST(Robustness, GridNames) {
  std::vector<std::string> names;
  for (const auto& s : ev::standard_grid()) names.push_back(s.name());
  EXPECT_EQ(names, (std::vector<std::string>{"erode3", "erode5", "erode7", "dilate3", "dilate5", "dilate7", "rotate-5",
                                             "rotate-3", "rotate+3", "rotate+5", "latent0.01", "latent0.05", "latent0.1"}));
}

TEST(Reconstruction, GroupsBySplit) {
  Rng rng(6);
  sm::vae::Vae<double> m(small_config());
  m.initialize(rng);
  const auto masks = random_masks(5, rng);
  using sm::shape::Split;
  const auto rep = ev::run_reconstruction_eval(m, {"a", "b", "c", "d", "e"},
                                               {Split::kTrain, Split::kTest, Split::kTrain, Split::kTrain, Split::kTest}, masks);
  ASSERT_EQ(rep.rows.size(), 5u);
  EXPECT_EQ(rep.mse.at("train").count, 3u);
  EXPECT_EQ(rep.iou.at("test").count, 2u);
  for (const auto& r : rep.rows) {
    EXPECT_GE(r.mse, 0.0);
    EXPECT_LE(r.iou, 1.0);
  }
}

TEST(Reconstruction, PerfectDecodeScoresZero) {
  Mask x(4, 4);
  x.at(1, 1) = x.at(2, 2) = 1;
  sm::vae::Reconstruction r;
  r.size = 4;
  for (auto p : x.pixels) r.logits.push_back(p ? 1000.0 : -1000.0);
  const auto s = ev::score_reconstruction(x, r);
  EXPECT_NEAR(s.mse, 0.0, 1e-15);
  EXPECT_NEAR(s.iou, 0.0, 1e-15);
}

TEST(MasksToTensor, RejectsMixedSizes) {
  EXPECT_THROW(ev::masks_to_tensor<double>({Mask(4, 4), Mask(5, 5)}), sm::ShapeError);
  EXPECT_THROW(ev::masks_to_tensor<double>({}), sm::DataError);
}
