// Copyright 2026 The LPM Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <thread>

#include "lpm/service.hpp"
#include "test_util.hpp"

namespace lpm {
namespace {

using nlohmann::json;
using testing::random_cloud;
using testing::tiny_spec;

Bundle service_bundle(bool with_vae) {
  Bundle b;
  b.model = LpmModel<float>(tiny_spec(3, 8, 16), 7);
  if (with_vae) {
    b.kind = CheckpointKind::kVae;
    b.vae = VaeHead<float>(8, 0.1, 3);
    b.vae->trained = true;
  }
  return b;
}

class ServiceTest : public ::testing::Test {
 protected:
  ServiceTest() : svc_(service_bundle(false), "0123456789abcdef", options()) {}

  static ServiceOptions options() {
    ServiceOptions o;
    o.cache_capacity = 4;
    o.max_body_bytes = 4096;
    o.seed = 42;
    return o;
  }

  ServiceResponse post(const std::string& path, const json& body) { return svc_.handle("POST", path, body.dump()); }

  std::string encode_cloud(const LabeledCloud& c) {
    const auto r = post("/encode", cloud_to_json(c));
    EXPECT_EQ(r.status, 200) << r.body.dump();
    return r.body.at("model_id").get<std::string>();
  }

  json reconstruction(const LabeledCloud& c) { return cloud_to_json(reconstruct(svc_.bundle().model, c, LabelSource::kGiven)); }

  EditService svc_;
};

TEST_F(ServiceTest, HealthAndStamps) {
  const auto r = svc_.handle("GET", "/health", "");
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body["status"], "ok");
  EXPECT_EQ(r.body["k"], 3);
  EXPECT_EQ(r.body["l"], 8);
  EXPECT_EQ(r.body["n"], 16);
  EXPECT_EQ(r.body["seed"], 42);
  EXPECT_EQ(r.body["checkpoint"], "0123456789abcdef");
  EXPECT_TRUE(r.body["heads"].empty());
}

TEST_F(ServiceTest, EncodeThenDecodeEqualsReconstruction) {
  std::mt19937_64 rng(1);
  const auto c = random_cloud(16, 3, rng);
  const auto enc = post("/encode", cloud_to_json(c));
  ASSERT_EQ(enc.status, 200);
  EXPECT_EQ(enc.body["label_source"], "given");
  EXPECT_EQ(enc.body["part_presence"], json({true, true, true}));
  const auto dec = post("/decode", {{"model_id", enc.body["model_id"]}});
  ASSERT_EQ(dec.status, 200);
  EXPECT_EQ(dec.body["cloud"].dump(), reconstruction(c).dump());
}

TEST_F(ServiceTest, EncodeWithoutLabelsUsesPredictions) {
  std::mt19937_64 rng(2);
  const auto c = random_cloud(16, 3, rng);
  const auto r = post("/encode", {{"points", cloud_to_json(c)["points"]}});
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["label_source"], "predicted");
  EXPECT_EQ(r.body["labels"].get<Labels>(), predict_labels(svc_.bundle().model, c.points));
}

TEST_F(ServiceTest, DecodeFromGlobalFeature) {
  std::mt19937_64 rng(3);
  const auto c = random_cloud(16, 3, rng);
  const auto e = encode(svc_.bundle().model, c);
  std::vector<double> g(e.global.data(), e.global.data() + e.global.size());
  const auto r = post("/decode", {{"global_feature", g}});
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["cloud"].dump(), reconstruction(c).dump());
  EXPECT_EQ(post("/decode", {{"global_feature", {1.0, 2.0}}}).status, 400);
  EXPECT_EQ(post("/decode", json::object()).status, 400);
}

TEST_F(ServiceTest, SwapAndSwapBackRestoresReconstruction) {
  std::mt19937_64 rng(4);
  const auto a = random_cloud(16, 3, rng);
  const auto b = random_cloud(16, 3, rng);
  const auto ida = encode_cloud(a);
  const auto idb = encode_cloud(b);
  const auto swapped = post("/edit", {{"op", "exchange"}, {"args", {{"part", 2}, {"sources", {ida, idb}}}}});
  ASSERT_EQ(swapped.status, 200) << swapped.body.dump();
  const auto back =
      post("/edit", {{"op", {{"kind", "exchange"}, {"part", 2}, {"sources", {swapped.body["model_id"], ida}}}}});
  ASSERT_EQ(back.status, 200) << back.body.dump();
  EXPECT_EQ(back.body["cloud"].dump(), reconstruction(a).dump());
  EXPECT_NE(back.body["model_id"], ida);
}

TEST_F(ServiceTest, InterpolateAtZeroIsSourceA) {
  std::mt19937_64 rng(5);
  const auto a = random_cloud(16, 3, rng);
  const auto b = random_cloud(16, 3, rng);
  const auto ida = encode_cloud(a);
  const auto idb = encode_cloud(b);
  for (const char* scope : {"part", "global"}) {
    const auto r =
        post("/edit", {{"op", "interpolate"}, {"args", {{"scope", scope}, {"part", 1}, {"t", 0.0}, {"sources", {ida, idb}}}}});
    ASSERT_EQ(r.status, 200) << r.body.dump();
    EXPECT_EQ(r.body["cloud"].dump(), reconstruction(a).dump()) << scope;
  }
  const auto global_only = post(
      "/edit", {{"op", "interpolate"}, {"args", {{"scope", "global"}, {"t", 0.5}, {"sources", {ida, idb}}}}});
  ASSERT_EQ(global_only.status, 200);
  EXPECT_TRUE(global_only.body["part_presence"].is_null());
  const auto chained = post("/edit", {{"op", "remove"}, {"args", {{"part", 1}, {"sources", {global_only.body["model_id"]}}}}});
  EXPECT_EQ(chained.status, 400);
}

TEST_F(ServiceTest, ErrorStatuses) {
  std::mt19937_64 rng(6);
  const auto id = encode_cloud(random_cloud(16, 3, rng));
  const auto bad_part = post("/edit", {{"op", "exchange"}, {"args", {{"part", 6}, {"sources", {id, id}}}}});
  EXPECT_EQ(bad_part.status, 400);
  EXPECT_NE(bad_part.body["error"].get<std::string>().find("1..3"), std::string::npos);
  EXPECT_EQ(bad_part.body["seed"], 42);
  EXPECT_EQ(post("/edit", {{"op", "interpolate"}, {"args", {{"part", 1}, {"t", 1.5}, {"sources", {id, id}}}}}).status, 400);
  EXPECT_EQ(post("/edit", {{"op", "teleport"}}).status, 400);
  EXPECT_EQ(post("/edit", {{"op", "exchange"}, {"args", {{"part", 1}, {"sources", {id, "m999"}}}}}).status, 404);
  EXPECT_EQ(post("/decode", {{"model_id", "nope"}}).status, 404);
  EXPECT_EQ(post("/generate", {{"head", "vae"}}).status, 409);
  EXPECT_EQ(post("/generate", {{"head", "gan"}}).status, 409);
  EXPECT_EQ(post("/generate", {{"head", "flow"}}).status, 400);
  EXPECT_EQ(post("/edit", {{"op", "regenerate"}, {"args", {{"part", 1}, {"sources", {id}}, {"head", "wgan"}}}}).status,
            409);
  EXPECT_EQ(svc_.handle("POST", "/encode", "{not json").status, 400);
  EXPECT_EQ(svc_.handle("POST", "/encode", "[1, 2]").status, 400);
  EXPECT_EQ(post("/encode", {{"points", {{0.0, 1.0}}}}).status, 400);
  EXPECT_EQ(svc_.handle("POST", "/encode", std::string(5000, ' ')).status, 413);
  EXPECT_EQ(svc_.handle("GET", "/nowhere", "").status, 404);
  EXPECT_EQ(svc_.handle("POST", "/health", "{}").status, 404);
}

TEST_F(ServiceTest, CacheIsBoundedLru) {
  std::mt19937_64 rng(7);
  std::vector<std::string> ids;
  for (int i = 0; i < 4; ++i) ids.push_back(encode_cloud(random_cloud(16, 3, rng)));
  EXPECT_EQ(post("/decode", {{"model_id", ids[0]}}).status, 200);  // touch the oldest
  ids.push_back(encode_cloud(random_cloud(16, 3, rng)));
  EXPECT_EQ(post("/decode", {{"model_id", ids[0]}}).status, 200);
  EXPECT_EQ(post("/decode", {{"model_id", ids[1]}}).status, 404);
  const auto listing = svc_.handle("GET", "/models", "");
  ASSERT_EQ(listing.body["models"].size(), 4u);
  EXPECT_EQ(listing.body["models"][0]["model_id"], ids[0]);
  EXPECT_EQ(listing.body["capacity"], 4);
  std::set<std::string> unique(ids.begin(), ids.end());
  EXPECT_EQ(unique.size(), ids.size());
}

TEST(Service, GenerateAndRegenerateWithHead) {
  EditService svc(service_bundle(true), "hash", ServiceOptions{});
  const auto r = svc.handle("POST", "/generate", json({{"head", "vae"}, {"count", 3}, {"seed", 5}}).dump());
  ASSERT_EQ(r.status, 200) << r.body.dump();
  EXPECT_EQ(r.body["clouds"].size(), 3u);
  EXPECT_EQ(r.body["model_ids"].size(), 3u);
  const auto again = svc.handle("POST", "/generate", json({{"head", "vae"}, {"count", 3}, {"seed", 5}}).dump());
  EXPECT_EQ(again.body["clouds"], r.body["clouds"]);
  EXPECT_NE(again.body["model_ids"], r.body["model_ids"]);
  EXPECT_EQ(svc.handle("POST", "/generate", json({{"head", "vae"}, {"count", 1000}}).dump()).status, 400);
  const auto regen = svc.handle(
      "POST", "/edit",
      json({{"op", "regenerate"}, {"args", {{"part", 2}, {"sources", {r.body["model_ids"][0]}}, {"seed", 9}}}}).dump());
  ASSERT_EQ(regen.status, 200) << regen.body.dump();
  EXPECT_EQ(regen.body["op"]["head"], "vae");
}

TEST(Service, CheckpointIsNeverMutated) {
  EditService svc(service_bundle(true), "hash", ServiceOptions{});
  const std::string before = serialize(to_container(svc.bundle()));
  std::mt19937_64 rng(8);
  const auto c = cloud_to_json(random_cloud(16, 3, rng));
  const auto enc = svc.handle("POST", "/encode", c.dump());
  svc.handle("POST", "/generate", json({{"head", "vae"}, {"count", 2}}).dump());
  svc.handle("POST", "/edit",
             json({{"op", "remove"}, {"args", {{"part", 1}, {"sources", {enc.body["model_id"]}}}}}).dump());
  EXPECT_EQ(serialize(to_container(svc.bundle())), before);
}

TEST(Service, ConcurrentEncodesGetUniqueIds) {
  EditService svc(service_bundle(false), "hash", ServiceOptions{});
  std::mt19937_64 rng(9);
  const std::string body = cloud_to_json(random_cloud(16, 3, rng)).dump();
  std::vector<std::vector<std::string>> got(4);
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 20; ++i) got[static_cast<std::size_t>(t)].push_back(svc.handle("POST", "/encode", body).body["model_id"]);
    });
  }
  for (auto& th : threads) th.join();
  std::set<std::string> all;
  for (const auto& v : got) all.insert(v.begin(), v.end());
  EXPECT_EQ(all.size(), 80u);
}

TEST(Service, HttpRoundTripOnLocalhost) {
  EditService svc(service_bundle(false), "hash", ServiceOptions{});
  httplib::Server server;
  configure_server(server, svc);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);
  const auto health = client.Get("/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(health->get_header_value("Access-Control-Allow-Origin"), "*");
  std::mt19937_64 rng(10);
  const auto c = random_cloud(16, 3, rng);
  const auto t0 = std::chrono::steady_clock::now();
  const auto enc = client.Post("/encode", cloud_to_json(c).dump(), "application/json");
  ASSERT_TRUE(enc);
  ASSERT_EQ(enc->status, 200);
  const auto id = json::parse(enc->body)["model_id"];
  const auto dec = client.Post("/decode", json({{"model_id", id}}).dump(), "application/json");
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  ASSERT_TRUE(dec);
  EXPECT_EQ(json::parse(dec->body)["cloud"].dump(),
            cloud_to_json(reconstruct(svc.bundle().model, c, LabelSource::kGiven)).dump());
  EXPECT_LT(ms, 500.0);
  const auto missing = client.Post("/decode", json({{"model_id", "x"}}).dump(), "application/json");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  const auto preflight = client.Options("/edit");
  ASSERT_TRUE(preflight);
  EXPECT_EQ(preflight->status, 204);
  server.stop();
  worker.join();
}

}  // namespace
}  // namespace lpm
