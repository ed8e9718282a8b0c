// SPDX-License-Identifier: Apache-2.0
#include "tlc/service/http.hpp"

#include <httplib.h>

#include "tlc/common/error.hpp"

namespace tlc::service {

using nlohmann::json;

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message,
                 const std::string& field = "") {
  json body{{"error", message}};
  if (!field.empty()) body["field"] = field;
  reply(res, status, body);
}

}  // namespace

struct HttpServer::Impl {
  JobService& jobs;
  httplib::Server server;

  explicit Impl(JobService& j) : jobs(j) {}
};

HttpServer::HttpServer(JobService& jobs, std::filesystem::path static_dir)
    : impl_(std::make_unique<Impl>(jobs)) {
  auto& svr = impl_->server;
  JobService* service = &jobs;

  svr.Get("/api/v1/health", [service](const httplib::Request&, httplib::Response& res) {
    const auto m = service->model();
    reply(res, 200, {{"status", "ok"}, {"model_loaded", m.has_value()}});
  });

  svr.Get("/api/v1/model", [service](const httplib::Request&, httplib::Response& res) {
    const auto m = service->model();
    if (!m) return reply_error(res, 409, "no model loaded");
    reply(res, 200, {{"digest", m->digest}, {"config", m->config}});
  });

  svr.Post("/api/v1/model", [service](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error& e) {
      return reply_error(res, 400, std::string("malformed JSON: ") + e.what(), "body");
    }
    if (!body.is_object() || !body.contains("model_dir") || !body["model_dir"].is_string())
      return reply_error(res, 400, "model_dir: must be a string", "model_dir");
    std::optional<std::string> expected;
    if (body.contains("expected_digest")) {
      if (!body["expected_digest"].is_string())
        return reply_error(res, 400, "expected_digest: must be a string", "expected_digest");
      expected = body["expected_digest"].get<std::string>();
    }
    try {
      const LoadedModel m = service->load_model(body["model_dir"].get<std::string>(), expected);
      reply(res, 200, {{"digest", m.digest}, {"config", m.config}});
    } catch (const VersionConflictError& e) {
      reply_error(res, 409, e.what(), "expected_digest");
    } catch (const Error& e) {
      reply_error(res, 422, e.what(), "model_dir");
    }
  });

  svr.Post("/api/v1/jobs", [service](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error& e) {
      return reply_error(res, 400, std::string("malformed JSON: ") + e.what(), "body");
    }
    try {
      const std::string id = service->submit(body);
      reply(res, 202, {{"id", id}, {"status", "pending"}});
    } catch (const ValidationError& e) {
      reply_error(res, 400, e.what(), e.field());
    } catch (const NoModelError& e) {
      reply_error(res, 409, e.what());
    }
  });

  svr.Get(R"(/api/v1/jobs/([A-Za-z0-9_-]+))", [service](const httplib::Request& req, httplib::Response& res) {
    try {
      reply(res, 200, service->poll(req.matches[1]).to_json());
    } catch (const UnknownJobError& e) {
      reply_error(res, 404, e.what());
    }
  });

  svr.Delete(R"(/api/v1/jobs/([A-Za-z0-9_-]+))",
             [service](const httplib::Request& req, httplib::Response& res) {
               try {
                 reply(res, 200, service->cancel(req.matches[1]).to_json());
               } catch (const UnknownJobError& e) {
                 reply_error(res, 404, e.what());
               }
             });

  svr.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      reply_error(res, 500, e.what());
    } catch (...) {
      reply_error(res, 500, "internal error");
    }
  });

  if (!static_dir.empty()) {
    if (!svr.set_mount_point("/ui", static_dir.string()))
      throw ConfigError("static directory not found: " + static_dir.string());
    svr.Get("/", [](const httplib::Request&, httplib::Response& res) { res.set_redirect("/ui/"); });
  }
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  auto& svr = impl_->server;
  if (port == 0) {
    const int p = svr.bind_to_any_port(host);
    if (p < 0) throw Error("cannot bind " + host);
    return p;
  }
  if (!svr.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace tlc::service
