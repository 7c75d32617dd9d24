// Copyright 2026 The Roentgen Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <fstream>
#include <future>
#include <set>

#include "fixtures.hpp"
#include "httplib.h"
#include "json.hpp"
#include "roentgen/roentgen.hpp"
#include "roentgen/service.hpp"

using namespace roentgen;
using nlohmann::json;

namespace {

const Network& small_net() {
  static const Network net(build_vgg16(Shape{32, 32, 1}, 8));
  return net;
}

Model zero_model() {
  static const KnowledgeBase kb = zero_trainable(small_net(), init_weights(small_net(), 11));
  return Model(small_net(), kb);
}

Model random_model() {
  static const KnowledgeBase kb = init_weights(small_net(), 12);
  return Model(small_net(), kb);
}

struct Running {
  std::filesystem::path storage;
  std::unique_ptr<DiagnosisService> service;
  std::unique_ptr<httplib::Client> client;

  explicit Running(std::optional<Model> model, std::optional<std::filesystem::path> metrics = {},
                   std::size_t upload_limit = 1 << 16) {
    storage = fixtures::temp_dir("svc");
    ServiceConfig cfg;
    cfg.host = "127.0.0.1";
    cfg.port = 0;
    cfg.storage_dir = storage;
    cfg.upload_limit = upload_limit;
    cfg.metrics_path = std::move(metrics);
    cfg.log_requests = false;
    service = std::make_unique<DiagnosisService>(cfg, std::move(model));
    const int port = service->start();
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
  }
  ~Running() {
    service->stop();
    std::filesystem::remove_all(storage);
  }

  httplib::Result post(const std::string& body) {
    return client->Post("/api/diagnose", body, "application/octet-stream");
  }
};

std::string image_bytes(std::uint64_t seed, bool bright) {
  Rng rng(seed);
  return encode_pgm(fixtures::bright_dark_image(32, bright, rng));
}

}  // namespace

TEST(Service, HealthReportsModel) {
  Running s(zero_model());
  auto a = s.client->Get("/health");
  ASSERT_TRUE(a);
  EXPECT_EQ(a->status, 200);
  const json ja = json::parse(a->body);
  EXPECT_EQ(ja["status"], "ok");
  EXPECT_EQ(ja["model_loaded"], true);
  EXPECT_EQ(ja["model_fingerprint"], small_net().fingerprint());
  auto b = s.client->Get("/health");
  ASSERT_TRUE(b);
  EXPECT_GE(json::parse(b->body)["uptime_seconds"].get<double>(), ja["uptime_seconds"].get<double>());
}

TEST(Service, ZeroHeadDiagnosis) {
  Running s(zero_model());
  auto r = s.post(image_bytes(1, true));
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200) << r->body;
  const json j = json::parse(r->body);
  EXPECT_EQ(j["score"].get<double>(), 0.5);
  EXPECT_EQ(j["label"], "pneumonic");
  EXPECT_EQ(j["threshold"].get<double>(), 0.5);
  EXPECT_EQ(j["model_fingerprint"], small_net().fingerprint());
  const std::string id = j["id"];
  EXPECT_TRUE(std::filesystem::exists(s.storage / "uploads" / (id + ".pgm")));
  EXPECT_TRUE(std::filesystem::exists(s.storage / "reports" / (id + ".json")));
}

TEST(Service, MalformedUploadIs400) {
  Running s(zero_model());
  auto r = s.post(std::string("\x01\x02\x03\x04", 4));
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 400);
  EXPECT_TRUE(json::parse(r->body).contains("error"));
}

TEST(Service, OversizeUploadIs413) {
  Running s(zero_model(), {}, 1024);
  auto r = s.post(std::string(4096, 'x'));
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 413);
}

TEST(Service, NoModelIs503) {
  Running s(std::nullopt);
  auto h = s.client->Get("/health");
  ASSERT_TRUE(h);
  EXPECT_EQ(json::parse(h->body)["model_loaded"], false);
  auto r = s.post(image_bytes(1, true));
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 503);
}

TEST(Service, RepeatedUploadSameScoreDistinctIds) {
  Running s(random_model());
  const std::string img = image_bytes(3, false);
  auto a = s.post(img);
  auto b = s.post(img);
  ASSERT_TRUE(a && b);
  ASSERT_EQ(a->status, 200);
  ASSERT_EQ(b->status, 200);
  const json ja = json::parse(a->body), jb = json::parse(b->body);
  EXPECT_EQ(ja["score"].get<double>(), jb["score"].get<double>());
  EXPECT_NE(ja["id"], jb["id"]);
}

TEST(Service, ReportRoundTrip) {
  Running s(random_model());
  auto r = s.post(image_bytes(4, true));
  ASSERT_TRUE(r);
  const json posted = json::parse(r->body);
  const std::string id = posted["id"];
  auto g = s.client->Get("/api/report/" + id);
  ASSERT_TRUE(g);
  EXPECT_EQ(g->status, 200);
  EXPECT_EQ(json::parse(g->body), posted);
  const Diagnosis d = diagnosis_from_json(json::parse(g->body));
  EXPECT_EQ(d.image_id, id);

  auto p = s.client->Get("/api/report/" + id + "/print");
  ASSERT_TRUE(p);
  EXPECT_EQ(p->status, 200);
  EXPECT_NE(p->body.find("<html"), std::string::npos);
  EXPECT_NE(p->body.find(id), std::string::npos);
}

TEST(Service, UnknownReportIs404) {
  Running s(zero_model());
  for (const std::string path : {"/api/report/0123456789abcdef", "/api/report/../../etc/passwd",
                                 "/api/report/zz", "/api/report/0123456789abcdef/print"}) {
    auto r = s.client->Get(path);
    ASSERT_TRUE(r) << path;
    EXPECT_EQ(r->status, 404) << path;
  }
}

TEST(Service, MetricsEndpoint) {
  const auto dir = fixtures::temp_dir("metrics");
  const auto file = dir / "metrics.jsonl";
  {
    std::ofstream out(file);
    for (int e = 1; e <= 3; ++e) out << to_json(EpochMetrics{static_cast<std::size_t>(e), 0.5, 0.75, {}}).dump() << '\n';
  }
  {
    Running s(zero_model(), file);
    auto r = s.client->Get("/api/metrics");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    std::istringstream in(r->body);
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      EXPECT_EQ(epoch_metrics_from_json(json::parse(line)).epoch, static_cast<std::size_t>(++lines));
    }
    EXPECT_EQ(lines, 3);
  }
  {
    Running s(zero_model());
    auto r = s.client->Get("/api/metrics");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 404);
  }
  std::filesystem::remove_all(dir);
}

TEST(Service, ConcurrentMatchesSequential) {
  Running s(random_model());
  std::vector<std::string> images;
  for (int i = 0; i < 6; ++i) images.push_back(image_bytes(100 + i, i % 2 == 0));

  std::vector<double> sequential;
  for (const auto& img : images) {
    auto r = s.post(img);
    ASSERT_TRUE(r);
    sequential.push_back(json::parse(r->body)["score"].get<double>());
  }
  EXPECT_NE(sequential[0], sequential[1]);

  std::vector<std::future<json>> futures;
  for (const auto& img : images)
    futures.push_back(std::async(std::launch::async, [&s, &img] {
      httplib::Client c("127.0.0.1", s.service->port());
      auto r = c.Post("/api/diagnose", img, "application/octet-stream");
      return r ? json::parse(r->body) : json();
    }));
  std::set<std::string> ids;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const json j = futures[i].get();
    ASSERT_TRUE(j.contains("score"));
    EXPECT_EQ(j["score"].get<double>(), sequential[i]);
    ids.insert(j["id"].get<std::string>());
  }
  EXPECT_EQ(ids.size(), images.size());
}
