// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "tlc/service/jobs.hpp"

namespace tlc::service {

/// JSON API under /api/v1 plus the static editor under /ui.
///   GET    /api/v1/health
///   GET    /api/v1/model           config + digest, 409 without a model
///   POST   /api/v1/model           {model_dir, expected_digest?} hot-swap
///   POST   /api/v1/jobs            202 {id}; 400 {error, field}; 409
///   GET    /api/v1/jobs/{id}       snapshot; 404
///   DELETE /api/v1/jobs/{id}       cancel; 404
class HttpServer {
 public:
  HttpServer(JobService& jobs, std::filesystem::path static_dir = {});
  ~HttpServer();

  /// Binds and returns the port (`port` 0 picks a free one). Throws Error on failure.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace tlc::service
