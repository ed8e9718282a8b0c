// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "tlc/common/error.hpp"
#include "tlc/opt/refine.hpp"
#include "tlc/service/request.hpp"

namespace tlc::service {

enum class JobStatus { pending, running, done, error, cancelled };

std::string_view status_name(JobStatus s) noexcept;
bool is_terminal(JobStatus s) noexcept;

struct TraceEntry {
  int sample = 0;
  int iteration = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
};

struct JobSnapshot {
  std::string id;
  JobStatus status = JobStatus::pending;
  double progress = 0.0;              // 0..1
  std::vector<TraceEntry> trace_tail;
  std::optional<nlohmann::json> result;  // present iff done
  std::string error;
  nlohmann::json request;

  nlohmann::json to_json() const;
};

/// Immutable model plus what GET /model reports about it.
struct LoadedModel {
  std::shared_ptr<const opt::ModelSet> models;
  std::string digest;
  nlohmann::json config;
};

/// Thrown by submit() when no model is loaded.
class NoModelError : public Error {
 public:
  NoModelError() : Error("no model loaded") {}
};

/// Thrown by lookups of ids the table never issued.
class UnknownJobError : public Error {
 public:
  explicit UnknownJobError(const std::string& id) : Error("unknown job '" + id + "'") {}
};

/// Thrown by load_model() when the caller's expected digest is stale.
class VersionConflictError : public Error {
 public:
  using Error::Error;
};

struct JobServiceConfig {
  int workers = 1;
  int max_samples = 16;
  int trace_tail = 32;
  opt::OptimizeConfig optimize;
};

/// Owns the job table and a fixed worker pool. Each job captures the model
/// that was active when it was submitted.
class JobService {
 public:
  explicit JobService(JobServiceConfig config);
  ~JobService();
  JobService(const JobService&) = delete;
  JobService& operator=(const JobService&) = delete;

  void set_model(LoadedModel model);
  /// Loads a model directory and swaps it in. When `expected_digest` is given
  /// it must equal the active digest. Throws LoadError, VersionConflictError.
  LoadedModel load_model(const std::filesystem::path& dir,
                         const std::optional<std::string>& expected_digest = std::nullopt);
  std::optional<LoadedModel> model() const;

  RequestLimits limits() const;
  /// Validates and enqueues. Throws ValidationError or NoModelError.
  std::string submit(const nlohmann::json& body);
  JobSnapshot poll(const std::string& id) const;
  /// Requests cancellation; pending jobs end immediately, running ones at the
  /// next optimizer iteration. Terminal jobs are returned unchanged.
  JobSnapshot cancel(const std::string& id);
  /// Blocks until the job is terminal or the timeout elapses.
  JobSnapshot wait(const std::string& id, std::chrono::milliseconds timeout) const;

  int max_concurrent_observed() const noexcept { return max_running_.load(); }
  const JobServiceConfig& config() const noexcept { return config_; }

 private:
  struct Job {
    JobSnapshot snap;
    GenerationRequest request;
    std::shared_ptr<const opt::ModelSet> models;
    std::atomic<bool> cancel{false};
  };

  void worker_loop();
  void run(Job& job);
  Job& find(const std::string& id) const;

  JobServiceConfig config_;
  mutable std::mutex mu_;
  mutable std::condition_variable changed_;
  std::condition_variable queue_cv_;
  std::map<std::string, std::unique_ptr<Job>> jobs_;
  std::deque<std::string> queue_;
  std::optional<LoadedModel> model_;
  std::uint64_t next_id_ = 1;
  bool stopping_ = false;
  std::atomic<int> running_{0};
  std::atomic<int> max_running_{0};
  std::vector<std::thread> threads_;
};

/// Loads a model directory into the form the service keeps.
LoadedModel load_model_dir(const std::filesystem::path& dir);

}  // namespace tlc::service
