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

#include <cmath>
#include <numeric>
#include <set>

#include "sherdmatch/cluster/analysis.hpp"
#include "sherdmatch/cluster/dendrogram_io.hpp"
#include "sherdmatch/cluster/distance.hpp"
#include "sherdmatch/cluster/linkage.hpp"
#include "support/oracles.hpp"

namespace sm = sherdmatch;
namespace cl = sherdmatch::cluster;
using sm::Rng;
using Points = std::vector<std::vector<double>>;

namespace {

Points random_points(std::size_t n, std::size_t dim, Rng& rng) {
  Points x(n, std::vector<double>(dim));
  for (auto& row : x)
    for (auto& v : row) v = rng.uniform(-1.0, 1.0);
  return x;
}

std::vector<std::string> names(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("T-1." + std::to_string(i + 1));
  return ids;
}

}  // namespace

TEST(Distance, HandValues) {
  const std::vector<double> a{0, 0}, b{3, 4};
  EXPECT_DOUBLE_EQ(cl::distance(a, b, cl::Metric::kEuclidean), 5.0);
  EXPECT_DOUBLE_EQ(cl::distance(a, b, cl::Metric::kCityblock), 7.0);
  EXPECT_DOUBLE_EQ(cl::distance(a, b, cl::Metric::kChebychev), 4.0);
  EXPECT_NEAR(cl::distance({1, 0}, {0, 2}, cl::Metric::kCosine), 1.0, 1e-15);
  EXPECT_EQ(cl::distance({0.3, -0.7}, {0.3, -0.7}, cl::Metric::kCosine), 0.0);
  EXPECT_NEAR(cl::distance({1, 0}, {-1, 0}, cl::Metric::kCosine), 2.0, 1e-15);
}

TEST(Distance, ZeroNormCosineIsFlagged) {
  bool flag = false;
  EXPECT_EQ(cl::distance({0, 0}, {1, 2}, cl::Metric::kCosine, &flag), 1.0);
  EXPECT_TRUE(flag);
  const auto d = cl::pairwise_distances({{0, 0}, {1, 0}, {0, 1}}, cl::Metric::kCosine);
  EXPECT_EQ(d.zero_norm_pairs, 2u);
}

TEST(Distance, CondensedLayoutMatchesFullMatrix) {
  Rng rng(1);
  const auto x = random_points(9, 3, rng);
  for (auto m : cl::all_metrics()) {
    const auto d = cl::pairwise_distances(x, m);
    const auto full = sm::oracle::full_matrix(x, m);
    ASSERT_EQ(d.values.size(), 36u);
    for (std::size_t i = 0; i < 9; ++i)
      for (std::size_t j = 0; j < 9; ++j) EXPECT_NEAR(d(i, j), full[std::min(i, j)][std::max(i, j)], 1e-12);
  }
}

TEST(Distance, NamesRoundTrip) {
  for (auto m : cl::all_metrics()) EXPECT_EQ(cl::parse_metric(cl::to_string(m)), m);
  for (auto m : cl::all_methods()) EXPECT_EQ(cl::parse_method(cl::to_string(m)), m);
  EXPECT_THROW(cl::parse_metric("manhattan2"), sm::Error);
  EXPECT_THROW(cl::parse_method("upgma"), sm::Error);
}

TEST(Linkage, ThreePoints) {
  const auto d = cl::pairwise_distances({{0}, {1}, {3}}, cl::Metric::kEuclidean);
  const auto s = cl::linkage(d, cl::Method::kSingle);
  ASSERT_EQ(s.merges.size(), 2u);
  EXPECT_EQ(s.merges[0].left, 0u);
  EXPECT_EQ(s.merges[0].right, 1u);
  EXPECT_EQ(s.merges[0].height, 1.0);
  EXPECT_EQ(s.merges[1].left, 2u);
  EXPECT_EQ(s.merges[1].right, 3u);
  EXPECT_EQ(s.merges[1].height, 2.0);
  EXPECT_EQ(s.merges[1].size, 3u);
  EXPECT_EQ(cl::linkage(d, cl::Method::kComplete).merges[1].height, 3.0);
  EXPECT_EQ(cl::linkage(d, cl::Method::kAverage).merges[1].height, 2.5);
  const auto c = cl::cophenetic(d, s);
  EXPECT_EQ(c.distances, (std::vector<double>{1, 2, 2}));
  ASSERT_TRUE(c.coefficient);
  EXPECT_NEAR(*c.coefficient, std::sqrt(3.0) / 2, 1e-15);
}

TEST(Linkage, TwoLeavesOnly) {
  const auto d = cl::pairwise_distances({{0, 1}, {2, 1}}, cl::Metric::kEuclidean);
  for (auto m : cl::all_methods()) {
    const auto t = cl::linkage(d, m);
    ASSERT_EQ(t.merges.size(), 1u);
    EXPECT_DOUBLE_EQ(t.merges[0].height, 2.0);
  }
  const auto sel = cl::select_best({{0, 1}, {2, 1}});
  EXPECT_EQ(sel.report.table.size(), 28u);
  EXPECT_FALSE(sel.cophenetic.coefficient.has_value());
  EXPECT_EQ(cl::extract_seeds(sel.dendrogram).size(), 1u);
}

TEST(Linkage, RejectsSingleRow) { EXPECT_THROW(cl::select_best({{1.0}}), sm::DataError); }

TEST(Linkage, LanceWilliamsMatchesMemberRecomputation) {
  for (int set = 0; set < 50; ++set) {
    Rng rng(1000 + set);
    const auto x = random_points(32, 8, rng);
    for (auto metric : cl::all_metrics()) {
      const auto d = cl::pairwise_distances(x, metric);
      const auto full = sm::oracle::full_matrix(x, metric);
      for (auto method : cl::all_methods()) {
        const auto fast = cl::linkage(d, method);
        const auto slow = sm::oracle::NaiveLinkage(full, method).run();
        EXPECT_LT(sm::oracle::dendrogram_gap(fast, slow), 1e-9)
            << "set " << set << " " << cl::to_string(method) << "/" << cl::to_string(metric);
      }
    }
  }
}

TEST(Linkage, LanceWilliamsMatchesAtSixtyFourLeaves) {
  for (int set = 0; set < 3; ++set) {
    Rng rng(2000 + set);
    const auto x = random_points(64, 6, rng);
    for (auto metric : cl::all_metrics()) {
      const auto d = cl::pairwise_distances(x, metric);
      const auto full = sm::oracle::full_matrix(x, metric);
      for (auto method : cl::all_methods())
        EXPECT_LT(sm::oracle::dendrogram_gap(cl::linkage(d, method), sm::oracle::NaiveLinkage(full, method).run()), 1e-9)
            << cl::to_string(method) << "/" << cl::to_string(metric);
    }
  }
}

TEST(Linkage, TiesBreakOnClusterIds) {
  // four corners of a unit square: every side ties at 1
  const auto d = cl::pairwise_distances({{0, 0}, {1, 0}, {0, 1}, {1, 1}}, cl::Metric::kEuclidean);
  const auto t = cl::linkage(d, cl::Method::kSingle);
  EXPECT_EQ(t.merges[0].left, 0u);
  EXPECT_EQ(t.merges[0].right, 1u);
  EXPECT_EQ(t.merges[1].left, 2u);
  EXPECT_EQ(t.merges[1].right, 3u);
}

TEST(Linkage, MonotoneMethodsHaveNoInversions) {
  for (int set = 0; set < 20; ++set) {
    Rng rng(3000 + set);
    const auto x = random_points(24, 4, rng);
    for (auto metric : cl::all_metrics()) {
      const auto d = cl::pairwise_distances(x, metric);
      for (auto m : {cl::Method::kSingle, cl::Method::kComplete, cl::Method::kAverage, cl::Method::kWeighted})
        EXPECT_FALSE(cl::linkage(d, m).has_inversion());
      EXPECT_FALSE(cl::linkage(cl::pairwise_distances(x, cl::Metric::kEuclidean), cl::Method::kWard).has_inversion());
    }
  }
}

TEST(Cophenetic, MatchesLowestCommonAncestor) {
  for (int set = 0; set < 10; ++set) {
    Rng rng(4000 + set);
    const auto x = random_points(16, 3, rng);
    const auto d = cl::pairwise_distances(x, cl::Metric::kEuclidean);
    for (auto m : cl::all_methods()) {
      const auto t = cl::linkage(d, m);
      EXPECT_EQ(cl::cophenetic(d, t).distances, sm::oracle::lca_cophenetic(t)) << cl::to_string(m);
    }
  }
}

TEST(Cophenetic, PermutationInvariant) {
  for (int set = 0; set < 10; ++set) {
    Rng rng(5000 + set);
    auto x = random_points(20, 5, rng);
    std::vector<std::size_t> perm(20);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm.begin(), perm.end());
    Points y(20);
    for (std::size_t i = 0; i < 20; ++i) y[i] = x[perm[i]];
    for (auto metric : cl::all_metrics()) {
      const auto dx = cl::pairwise_distances(x, metric), dy = cl::pairwise_distances(y, metric);
      for (auto m : cl::all_methods()) {
        const auto cx = cl::cophenetic(dx, cl::linkage(dx, m));
        const auto cy = cl::cophenetic(dy, cl::linkage(dy, m));
        ASSERT_TRUE(cx.coefficient && cy.coefficient);
        EXPECT_NEAR(*cx.coefficient, *cy.coefficient, 1e-10);
        for (std::size_t i = 0; i < 20; ++i)
          for (std::size_t j = i + 1; j < 20; ++j)
            EXPECT_NEAR(cy.distances[cl::DistanceMatrix::index(20, i, j)],
                        cx.distances[cl::DistanceMatrix::index(20, std::min(perm[i], perm[j]), std::max(perm[i], perm[j]))],
                        1e-10);
      }
    }
  }
}

TEST(Cophenetic, AffineInvariantForMonotoneMethods) {
  for (int set = 0; set < 10; ++set) {
    Rng rng(6000 + set);
    const auto x = random_points(20, 4, rng);
    const auto d = cl::pairwise_distances(x, cl::Metric::kCityblock);
    auto e = d;
    for (auto& v : e.values) v = 2.5 * v + 0.75;
    for (auto m : {cl::Method::kSingle, cl::Method::kComplete, cl::Method::kAverage, cl::Method::kWeighted}) {
      const auto td = cl::linkage(d, m), te = cl::linkage(e, m);
      ASSERT_EQ(td.merges.size(), te.merges.size());
      for (std::size_t s = 0; s < td.merges.size(); ++s) {
        EXPECT_EQ(td.merges[s].left, te.merges[s].left);
        EXPECT_EQ(td.merges[s].right, te.merges[s].right);
        EXPECT_NEAR(te.merges[s].height, 2.5 * td.merges[s].height + 0.75, 1e-12);
      }
      EXPECT_NEAR(*cl::cophenetic(d, td).coefficient, *cl::cophenetic(e, te).coefficient, 1e-12);
    }
  }
}

TEST(Selection, UltrametricPicksAverageEuclidean) {
  // eight leaves on a three-level tree; each tree edge owns an orthogonal axis
  // and all edges of a level share one length
  const double len[3] = {3.0, 1.5, 0.5};
  Points x(8, std::vector<double>(14, 0.0));
  for (std::size_t leaf = 0; leaf < 8; ++leaf) {
    const std::size_t e1 = leaf / 4, e2 = 2 + leaf / 2, e3 = 6 + leaf;
    x[leaf][e1] = len[0];
    x[leaf][e2] = len[1];
    x[leaf][e3] = len[2];
  }
  const auto sel = cl::select_best(x);
  EXPECT_EQ(sel.report.table.size(), 28u);
  EXPECT_EQ(sel.report.best().method, cl::Method::kAverage);
  EXPECT_EQ(sel.report.best().metric, cl::Metric::kEuclidean);
  ASSERT_TRUE(sel.report.best().coefficient);
  EXPECT_NEAR(*sel.report.best().coefficient, 1.0, 1e-12);
  EXPECT_EQ(cl::extract_seeds(sel.dendrogram).size(), 4u);
  EXPECT_EQ(cl::cut_clusters(sel.dendrogram, 2), (std::vector<std::size_t>{0, 0, 0, 0, 1, 1, 1, 1}));
}

TEST(Selection, TableFlagsAndCsv) {
  Rng rng(7);
  const auto sel = cl::select_best(random_points(12, 3, rng));
  std::size_t caveats = 0;
  for (const auto& e : sel.report.table) caveats += e.geometric_caveat;
  EXPECT_EQ(caveats, 9u);
  for (std::size_t i = 0; i < sel.report.table.size(); ++i)
    if (sel.report.table[i].coefficient) {
      EXPECT_LE(*sel.report.table[i].coefficient, *sel.report.best().coefficient + 1e-12);
    }
  const auto csv = cl::selection_csv(sel.report);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 29);
  EXPECT_EQ(csv.find("selected"), csv.rfind("selected"));
}

TEST(Seeds, TwoPairsAndChain) {
  const auto pairs = cl::pairwise_distances({{0}, {0.25}, {10}, {10.5}}, cl::Metric::kEuclidean);
  const auto sp = cl::extract_seeds(cl::linkage(pairs, cl::Method::kAverage));
  ASSERT_EQ(sp.size(), 2u);
  EXPECT_EQ(sp[0].left, 0u);
  EXPECT_EQ(sp[0].right, 1u);
  EXPECT_EQ(sp[1].left, 2u);
  EXPECT_EQ(sp[1].right, 3u);
  const auto chain = cl::pairwise_distances({{0}, {1}, {3}, {7}}, cl::Metric::kEuclidean);
  EXPECT_EQ(cl::extract_seeds(cl::linkage(chain, cl::Method::kSingle)).size(), 1u);
}

TEST(Seeds, AtMostHalfTheLeaves) {
  for (int set = 0; set < 30; ++set) {
    Rng rng(8000 + set);
    const std::size_t n = 2 + rng.below(40);
    const auto d = cl::pairwise_distances(random_points(n, 3, rng), cl::Metric::kEuclidean);
    for (auto m : cl::all_methods()) {
      const auto seeds = cl::extract_seeds(cl::linkage(d, m));
      EXPECT_GE(seeds.size(), 1u);
      EXPECT_LE(seeds.size(), n / 2);
      std::vector<int> seen(n, 0);
      for (std::size_t i = 0; i < seeds.size(); ++i) {
        EXPECT_EQ(++seen[seeds[i].left], 1);
        EXPECT_EQ(++seen[seeds[i].right], 1);
        if (i) {
          EXPECT_LE(seeds[i - 1].height, seeds[i].height);
        }
      }
    }
  }
}

TEST(Seeds, JsonKeysAreOrderFree) {
  EXPECT_EQ(cl::seed_key("B-1.1", "A-1.1"), "A-1.1~B-1.1");
  EXPECT_EQ(cl::seed_key("A-1.1", "B-1.1"), "A-1.1~B-1.1");
  const std::vector<cl::Seed> seeds{{1, 0, 0.5, 0}};
  const auto j = cl::seeds_to_json(seeds, {"Z-1.1", "A-1.1"}, "abc");
  EXPECT_EQ(j["seeds"][0]["key"], "A-1.1~Z-1.1");
  EXPECT_EQ(j["dendrogram_sha256"], "abc");
}

TEST(CutClusters, Counts) {
  Rng rng(9);
  const auto t = cl::linkage(cl::pairwise_distances(random_points(15, 2, rng), cl::Metric::kEuclidean), cl::Method::kWard);
  for (std::size_t k = 1; k <= 15; ++k) {
    const auto labels = cl::cut_clusters(t, k);
    EXPECT_EQ(std::set<std::size_t>(labels.begin(), labels.end()).size(), k);
  }
  EXPECT_THROW(cl::cut_clusters(t, 0), sm::ConfigError);
  EXPECT_THROW(cl::cut_clusters(t, 16), sm::ConfigError);
}

TEST(AdjustedRand, KnownValues) {
  EXPECT_DOUBLE_EQ(cl::adjusted_rand_index({0, 0, 1, 1}, {5, 5, 2, 2}), 1.0);
  EXPECT_NEAR(cl::adjusted_rand_index({0, 0, 0, 1, 1, 1}, {0, 0, 1, 1, 2, 2}), 0.24242424242424246, 1e-12);
  EXPECT_NEAR(cl::adjusted_rand_index({0, 0, 1, 1}, {0, 1, 0, 1}), -0.5, 1e-12);
}

TEST(DendrogramIo, GoldenThreeLeafExport) {
  const auto d = cl::pairwise_distances({{0}, {1}, {3}}, cl::Metric::kEuclidean);
  cl::DendrogramDocument doc;
  doc.tree = cl::linkage(d, cl::Method::kSingle);
  doc.leaf_ids = {"GOLD-1.1", "GOLD-1.2", "GOLD-1.3"};
  doc.coefficient = cl::cophenetic(d, doc.tree).coefficient;
  const auto golden = sm::read_file(std::string(SHERDMATCH_TEST_DATA) + "/golden_3leaf.json");
  EXPECT_EQ(cl::export_dendrogram(doc), golden);
  const auto back = cl::import_dendrogram(nlohmann::json::parse(golden));
  EXPECT_EQ(cl::export_dendrogram(back), golden);
}

TEST(DendrogramIo, RoundTripIsByteStable) {
  Rng rng(10);
  const auto sel = cl::select_best(random_points(30, 4, rng));
  const cl::DendrogramDocument doc{sel.dendrogram, names(30), sel.cophenetic.coefficient};
  const auto text = cl::export_dendrogram(doc);
  EXPECT_EQ(cl::export_dendrogram(cl::import_dendrogram(nlohmann::json::parse(text))), text);
}

TEST(DendrogramIo, RejectsBrokenTrees) {
  const auto good = nlohmann::json::parse(sm::read_file(std::string(SHERDMATCH_TEST_DATA) + "/golden_3leaf.json"));
  auto j = good;
  j["merges"][1]["left"] = 1;  // leaf 1 used twice
  EXPECT_THROW(cl::import_dendrogram(j), sm::DataError);
  j = good;
  j["merges"][1]["size"] = 4;
  EXPECT_THROW(cl::import_dendrogram(j), sm::DataError);
  j = good;
  j["schema_version"] = 2;
  EXPECT_THROW(cl::import_dendrogram(j), sm::DataError);
  j = good;
  j.erase("merges");
  EXPECT_THROW(cl::import_dendrogram(j), sm::DataError);
}
