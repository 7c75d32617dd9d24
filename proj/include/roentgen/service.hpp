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

// HTTP diagnosis service.
//
//   GET  /health                  {"status","model_fingerprint","uptime_seconds"}
//   POST /api/diagnose            raw binary PGM body -> Diagnosis JSON (+ "id")
//   GET  /api/report/<id>         stored Diagnosis JSON
//   GET  /api/report/<id>/print   printable HTML view of the same report
//   GET  /api/metrics             training metrics, JSON lines
//
// Uploads and reports are persisted under <storage>/uploads/<id>.pgm and
// <storage>/reports/<id>.json.

#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "roentgen/imaging.hpp"
#include "roentgen/model.hpp"

namespace roentgen {

struct ServiceConfig {
  std::string host = "0.0.0.0";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path model_path;
  std::size_t upload_limit = 8u << 20;
  std::filesystem::path storage_dir = "storage";
  std::optional<std::filesystem::path> metrics_path;
  std::optional<std::filesystem::path> static_dir;
  /// Overrides the threshold recorded in the knowledge base.
  std::optional<double> threshold;
  bool log_requests = true;
};

class DiagnosisService {
 public:
  /// `model` may be empty; /api/diagnose then answers 503.
  DiagnosisService(ServiceConfig cfg, std::optional<Model> model)
      : cfg_(std::move(cfg)), model_(std::move(model)), started_(std::chrono::steady_clock::now()),
        id_engine_(std::random_device{}()) {
    if (cfg_.upload_limit == 0) throw ArgumentError("upload limit must be positive");
    namespace fs = std::filesystem;
    fs::create_directories(cfg_.storage_dir / "uploads");
    fs::create_directories(cfg_.storage_dir / "reports");
    routes();
  }

  ~DiagnosisService() { stop(); }

  DiagnosisService(const DiagnosisService&) = delete;
  DiagnosisService& operator=(const DiagnosisService&) = delete;

  /// Binds and serves on a background thread; returns the bound port.
  int start() {
    const int port = bind();
    worker_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port;
  }

  /// Binds and serves on the calling thread until stop().
  void run() {
    bind();
    server_.listen_after_bind();
  }

  void stop() {
    server_.stop();
    if (worker_.joinable()) worker_.join();
  }

  int port() const noexcept { return port_; }
  const std::optional<Model>& model() const noexcept { return model_; }

 private:
  int bind() {
    port_ = cfg_.port == 0 ? server_.bind_to_any_port(cfg_.host) : cfg_.port;
    if (port_ < 0 || (cfg_.port != 0 && !server_.bind_to_port(cfg_.host, cfg_.port)))
      throw IoError("cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port));
    return port_;
  }

  static void json_reply(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void error_reply(httplib::Response& res, int status, const std::string& message) {
    json_reply(res, status, {{"error", message}, {"status", status}});
  }

  double uptime() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  }

  std::string fresh_id() {
    std::lock_guard lock(id_mutex_);
    for (;;) {
      char buf[17];
      std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(id_engine_()));
      if (!std::filesystem::exists(report_path(buf))) return buf;
    }
  }

  std::filesystem::path report_path(const std::string& id) const {
    return cfg_.storage_dir / "reports" / (id + ".json");
  }

  static void write_atomically(const std::filesystem::path& path, const std::string& bytes) {
    const auto tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      if (!out) throw IoError("failed writing '" + tmp + "'");
    }
    std::filesystem::rename(tmp, path);
  }

  std::optional<nlohmann::json> read_report(const std::string& id, httplib::Response& res) const {
    const auto path = report_path(id);
    if (!std::filesystem::exists(path)) {
      error_reply(res, 404, "no report with id '" + id + "'");
      return std::nullopt;
    }
    try {
      return nlohmann::json::parse(read_file_bytes(path));
    } catch (const std::exception& e) {
      error_reply(res, 500, std::string("report storage unreadable: ") + e.what());
      return std::nullopt;
    }
  }

  void routes() {
    server_.set_payload_max_length(cfg_.upload_limit);

    server_.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
      json_reply(res, 200,
                 {{"status", "ok"},
                  {"model_loaded", model_.has_value()},
                  {"model_fingerprint", model_ ? model_->fingerprint() : std::string()},
                  {"uptime_seconds", uptime()}});
    });

    server_.Post("/api/diagnose", [this](const httplib::Request& req, httplib::Response& res) {
      if (!model_) return error_reply(res, 503, "model not loaded");
      if (req.body.size() > cfg_.upload_limit) return error_reply(res, 413, "upload exceeds limit");
      GrayImage img;
      try {
        img = decode_pgm(req.body);
      } catch (const FormatError& e) {
        return error_reply(res, 400, std::string("malformed image: ") + e.what());
      }
      const std::string id = fresh_id();
      const double threshold = cfg_.threshold.value_or(model_->default_threshold());
      Diagnosis d = model_->diagnose(img, threshold, id);
      nlohmann::json body = to_json(d);
      body["id"] = id;
      write_atomically(cfg_.storage_dir / "uploads" / (id + ".pgm"), req.body);
      write_atomically(report_path(id), body.dump(2));
      json_reply(res, 200, body);
    });

    server_.Get(R"(/api/report/([0-9a-f]{16}))", [this](const httplib::Request& req, httplib::Response& res) {
      if (auto report = read_report(req.matches[1], res)) json_reply(res, 200, *report);
    });

    server_.Get(R"(/api/report/([0-9a-f]{16})/print)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  if (auto report = read_report(req.matches[1], res)) {
                    res.status = 200;
                    res.set_content(printable_report(*report), "text/html; charset=utf-8");
                  }
                });

    server_.Get(R"(/api/report/(.*))", [](const httplib::Request& req, httplib::Response& res) {
      error_reply(res, 404, "no report with id '" + std::string(req.matches[1]) + "'");
    });

    server_.Get("/api/metrics", [this](const httplib::Request&, httplib::Response& res) {
      if (!cfg_.metrics_path) return error_reply(res, 404, "no training metrics configured");
      std::string body;
      try {
        body = read_file_bytes(*cfg_.metrics_path);
      } catch (const Error& e) {
        return error_reply(res, 500, e.what());
      }
      res.status = 200;
      res.set_content(body, "application/x-ndjson");
    });

    if (cfg_.static_dir) server_.set_mount_point("/", cfg_.static_dir->string());

    server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string what = "internal error";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      error_reply(res, 500, what);
    });

    if (cfg_.log_requests) {
      server_.set_logger([this](const httplib::Request& req, const httplib::Response& res) {
        const nlohmann::json line = {{"time", iso8601_now()},   {"method", req.method},
                                     {"path", req.path},        {"status", res.status},
                                     {"request_bytes", req.body.size()},
                                     {"response_bytes", res.body.size()}};
        std::lock_guard lock(log_mutex_);
        std::cout << line.dump() << std::endl;
      });
    }
  }

  static std::string html_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
      switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
      }
    }
    return out;
  }

  static std::string printable_report(const nlohmann::json& r) {
    auto field = [&](const char* key) {
      const auto& v = r.contains(key) ? r.at(key) : nlohmann::json();
      return html_escape(v.is_string() ? v.get<std::string>() : v.dump());
    };
    return "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Diagnosis report " + field("id") +
           "</title></head><body>\n<h1>Preliminary diagnosis</h1>\n<table>\n"
           "<tr><th>Report id</th><td>" + field("id") + "</td></tr>\n"
           "<tr><th>Label</th><td>" + field("label") + "</td></tr>\n"
           "<tr><th>Score</th><td>" + field("score") + "</td></tr>\n"
           "<tr><th>Threshold</th><td>" + field("threshold") + "</td></tr>\n"
           "<tr><th>Model</th><td>" + field("model_fingerprint") + "</td></tr>\n"
           "<tr><th>Time</th><td>" + field("timestamp") + "</td></tr>\n</table>\n"
           "<p><strong>For assisted diagnosis under medical supervision only.</strong></p>\n"
           "</body></html>\n";
  }

  ServiceConfig cfg_;
  std::optional<Model> model_;
  std::chrono::steady_clock::time_point started_;
  httplib::Server server_;
  std::thread worker_;
  int port_ = -1;
  std::mutex id_mutex_;
  std::mt19937_64 id_engine_;
  std::mutex log_mutex_;
};

}  // namespace roentgen
