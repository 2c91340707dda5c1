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

#include <filesystem>
#include <thread>

#include "sherdmatch/pipeline.hpp"
#include "sherdmatch/service/catalog.hpp"
#include "sherdmatch/service/http.hpp"

namespace fs = std::filesystem;
namespace sm = sherdmatch;
namespace svc = sherdmatch::service;

namespace {

// Three tight pairs far apart: average linkage yields three leaf-pair seeds.
class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("sherdmatch_svc_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_ / "profiles");
    sm::vae::VaeConfig c;
    c.image_size = 8;
    c.f = 0;
    c.k = 1;
    c.precision = sm::vae::Precision::kFloat64;
    sm::vae::TrainState<double> st(c);
    st.model.initialize(st.rng);
    sm::vae::save_checkpoint(dir_ / "checkpoint.bin", st);
    sm::vae::FeatureTable t;
    const double xs[6] = {0.0, 0.25, 10.0, 10.5, 20.0, 21.0};
    for (int i = 0; i < 6; ++i) {
      t.ids.push_back("SVC-1." + std::to_string(i + 1));
      t.rows.push_back({xs[i], 0.5});
      sm::shape::Mask m(8, 8);
      m.at(2, 2 + static_cast<std::size_t>(i % 4)) = 1;
      sm::shape::write_mask_png(dir_ / "profiles" / (t.ids.back() + ".png"), m);
    }
    sm::vae::write_features(dir_ / "features.csv", t, nlohmann::json::object());
    sm::pipeline::run_cluster(dir_ / "features.csv", dir_);
    sm::pipeline::run_seeds(dir_ / "dendrogram.json", dir_);
  }

  void TearDown() override { fs::remove_all(dir_); }

  svc::ServiceOptions options() const {
    svc::ServiceOptions o;
    o.run_dir = dir_;
    o.clock = [] { return std::string("2026-01-01T00:00:00Z"); };
    return o;
  }

  fs::path dir_;
};

const std::string kValidKnown = R"({"status":"valid","known_in_corpus":true,"reviewer":"r1"})";
const std::string kValidNew = R"({"status":"valid","known_in_corpus":false,"reviewer":"r1"})";
const std::string kInvalid = R"({"status":"invalid","reviewer":"r2"})";

}  // namespace

TEST_F(ServiceTest, StartsWithThreeUndecidedSeeds) {
  svc::Catalog cat(options());
  ASSERT_EQ(cat.seed_keys().size(), 3u);
  EXPECT_EQ(cat.current_stats(), (svc::MatchStats{3, 0, 0, 3, 0, 0}));
  const auto h = nlohmann::json::parse(cat.health().body);
  EXPECT_EQ(h["status"], "ok");
  EXPECT_EQ(h["artifacts"]["dendrogram.json"], sm::file_sha256(dir_ / "dendrogram.json"));
}

TEST_F(ServiceTest, StatsAfterValidations) {
  svc::Catalog cat(options());
  const auto& keys = cat.seed_keys();
  EXPECT_EQ(cat.post_verdict(keys[0], kValidKnown).status, 201);
  EXPECT_EQ(cat.post_verdict(keys[1], kValidNew).status, 201);
  const auto s = nlohmann::json::parse(cat.stats().body);
  EXPECT_EQ(s["validated"], 2);
  EXPECT_EQ(s["known"], 1);
  EXPECT_EQ(s["new"], 1);
  EXPECT_EQ(s["undecided"], 1);
  EXPECT_EQ(cat.post_verdict(keys[2], kInvalid).status, 201);
  EXPECT_EQ(cat.current_stats(), (svc::MatchStats{3, 2, 1, 0, 1, 1}));
}

TEST_F(ServiceTest, LogReplayRestoresState) {
  svc::MatchStats before;
  {
    svc::Catalog cat(options());
    const auto& keys = cat.seed_keys();
    cat.post_verdict(keys[0], kInvalid);
    cat.post_verdict(keys[0], kValidKnown);
    cat.post_verdict(keys[1], kValidNew);
    cat.post_verdict(keys[2], kInvalid);
    before = cat.current_stats();
  }
  svc::Catalog again(options());
  EXPECT_EQ(again.current_stats(), before);
  const auto seed = nlohmann::json::parse(again.seed(again.seed_keys()[0]).body);
  EXPECT_EQ(seed["history_length"], 2);
  EXPECT_EQ(seed["verdict"]["status"], "valid");
  EXPECT_EQ(seed["history"].size(), 2u);
  EXPECT_EQ(seed["verdict"]["seq"], 1);
}

TEST_F(ServiceTest, UnknownThingsAre404) {
  svc::Catalog cat(options());
  EXPECT_EQ(cat.seed("NOPE~NOPE").status, 404);
  EXPECT_EQ(cat.post_verdict("NOPE~NOPE", kValidNew).status, 404);
  EXPECT_EQ(cat.profile_image("NOPE-1.1").status, 404);
  EXPECT_EQ(cat.reconstruction("NOPE-1.1").status, 404);
}

TEST_F(ServiceTest, MalformedVerdictsAre422) {
  svc::Catalog cat(options());
  const auto key = cat.seed_keys()[0];
  for (const std::string& body : {std::string("not json"), std::string("[1]"), std::string(R"({"status":"maybe","reviewer":"a"})"),
                                 std::string(R"({"reviewer":"a"})"), std::string(R"({"status":"valid"})"),
                                 std::string(R"({"status":"valid","reviewer":""})"),
                                 std::string(R"({"status":"valid","reviewer":"a","known_in_corpus":"yes"})"),
                                 std::string(R"({"status":"valid","reviewer":"a","extra":1})")})
    EXPECT_EQ(cat.post_verdict(key, body).status, 422) << body;
  EXPECT_EQ(cat.current_stats().undecided, 3u);
  EXPECT_FALSE(fs::exists(cat.verdict_log()));
}

TEST_F(ServiceTest, HashMismatchRefusesToStart) {
  auto seeds = sm::read_json(dir_ / "seeds.json");
  seeds["dendrogram_sha256"] = std::string(64, '0');
  sm::write_json(dir_ / "seeds.json", seeds);
  EXPECT_THROW(svc::Catalog{options()}, sm::IntegrityError);
}

TEST_F(ServiceTest, ForeignLogEntryRefusesToStart) {
  sm::write_file(dir_ / "verdicts.jsonl",
                 R"({"known_in_corpus":false,"reviewer":"x","seed":"Q~R","seq":0,"status":"valid","timestamp":"t"})"
                 "\n");
  EXPECT_THROW(svc::Catalog{options()}, sm::IntegrityError);
  sm::write_file(dir_ / "verdicts.jsonl", "{broken\n");
  EXPECT_THROW(svc::Catalog{options()}, sm::IntegrityError);
}

TEST_F(ServiceTest, ImagesAndReconstructions) {
  svc::Catalog cat(options());
  const auto img = cat.profile_image("SVC-1.1");
  EXPECT_EQ(img.status, 200);
  EXPECT_EQ(img.content_type, "image/png");
  EXPECT_EQ(img.body, sm::read_file(dir_ / "profiles" / "SVC-1.1.png"));
  const auto rec = cat.reconstruction("SVC-1.2");
  ASSERT_EQ(rec.status, 200);
  const auto g = sm::shape::decode_png(rec.body);
  EXPECT_EQ(g.height, 8u);
}

TEST_F(ServiceTest, HttpRoundTrip) {
  svc::Catalog cat(options());
  httplib::Server srv;
  svc::bind_routes(srv, cat);
  const int port = srv.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread th([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();
  httplib::Client cli("127.0.0.1", port);

  auto r = cli.Get("/api/dendrogram");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(r->body, sm::read_file(dir_ / "dendrogram.json"));
  EXPECT_EQ(r->get_header_value("Access-Control-Allow-Origin"), "*");

  const auto key = cat.seed_keys()[0];
  r = cli.Post("/api/seeds/" + key + "/verdict", kValidKnown, "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 201);
  r = cli.Get("/api/seeds/" + key);
  ASSERT_TRUE(r);
  const auto seed = nlohmann::json::parse(r->body);
  EXPECT_EQ(seed["verdict"]["status"], "valid");
  EXPECT_EQ(seed["verdict"]["known_in_corpus"], true);
  EXPECT_EQ(seed["verdict"]["timestamp"], "2026-01-01T00:00:00Z");

  r = cli.Get("/api/seeds");
  ASSERT_TRUE(r);
  EXPECT_EQ(nlohmann::json::parse(r->body)["seeds"].size(), 3u);
  r = cli.Get("/api/stats");
  ASSERT_TRUE(r);
  EXPECT_EQ(nlohmann::json::parse(r->body)["validated"], 1);
  r = cli.Post("/api/seeds/" + key + "/verdict", "{", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 422);
  r = cli.Get("/api/seeds/UNKNOWN");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 404);
  r = cli.Get("/api/profiles/SVC-1.3/image");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(r->get_header_value("Content-Type"), "image/png");
  r = cli.Get("/api/health");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  r = cli.Get("/no/such/route");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 404);

  srv.stop();
  th.join();
}
