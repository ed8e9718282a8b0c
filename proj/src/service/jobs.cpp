// SPDX-License-Identifier: Apache-2.0
#include "tlc/service/jobs.hpp"

#include <algorithm>
#include <cstdio>

#include "tlc/common/error.hpp"
#include "tlc/nn/container.hpp"

namespace tlc::service {

using nlohmann::json;

std::string_view status_name(JobStatus s) noexcept {
  switch (s) {
    case JobStatus::pending: return "pending";
    case JobStatus::running: return "running";
    case JobStatus::done: return "done";
    case JobStatus::error: return "error";
    case JobStatus::cancelled: return "cancelled";
  }
  return "unknown";
}

bool is_terminal(JobStatus s) noexcept {
  return s == JobStatus::done || s == JobStatus::error || s == JobStatus::cancelled;
}

json JobSnapshot::to_json() const {
  json tail = json::array();
  for (const auto& e : trace_tail)
    tail.push_back({{"sample", e.sample},
                    {"iteration", e.iteration},
                    {"objective", e.objective},
                    {"grad_norm", e.grad_norm}});
  json j{{"id", id},
         {"status", std::string(status_name(status))},
         {"progress", {{"fraction", progress}, {"trace", tail}}},
         {"request", request}};
  if (result) j["result"] = *result;
  if (status == JobStatus::error) j["error"] = error;
  return j;
}

LoadedModel load_model_dir(const std::filesystem::path& dir) {
  auto models = std::make_shared<const opt::ModelSet>(opt::ModelSet::load(dir));
  LoadedModel m;
  m.digest = nn::container_digest(dir);
  m.config = {{"format_version", nn::kContainerFormatVersion},
              {"vqvae", models->codec.config().to_json()},
              {"mtt", models->transformer.config().to_json()},
              {"max_length", models->transformer.config().max_length}};
  m.models = std::move(models);
  return m;
}

JobService::JobService(JobServiceConfig config) : config_(std::move(config)) {
  if (config_.workers < 1) throw ConfigError("workers must be at least 1");
  config_.optimize.validate();
  threads_.reserve(static_cast<std::size_t>(config_.workers));
  for (int i = 0; i < config_.workers; ++i) threads_.emplace_back([this] { worker_loop(); });
}

JobService::~JobService() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
    for (auto& [id, job] : jobs_) job->cancel = true;
  }
  queue_cv_.notify_all();
  for (auto& t : threads_) t.join();
}

void JobService::set_model(LoadedModel model) {
  std::lock_guard lock(mu_);
  model_ = std::move(model);
}

LoadedModel JobService::load_model(const std::filesystem::path& dir,
                                   const std::optional<std::string>& expected_digest) {
  {
    std::lock_guard lock(mu_);
    const std::string current = model_ ? model_->digest : "";
    if (expected_digest && *expected_digest != current)
      throw VersionConflictError("expected model digest '" + *expected_digest + "' but active is '" +
                                 current + "'");
  }
  LoadedModel loaded = load_model_dir(dir);
  std::lock_guard lock(mu_);
  const std::string current = model_ ? model_->digest : "";
  if (expected_digest && *expected_digest != current)
    throw VersionConflictError("model changed while loading");
  model_ = loaded;
  return loaded;
}

std::optional<LoadedModel> JobService::model() const {
  std::lock_guard lock(mu_);
  return model_;
}

RequestLimits JobService::limits() const {
  std::lock_guard lock(mu_);
  if (!model_) throw NoModelError();
  RequestLimits l;
  l.max_length = model_->models->transformer.config().max_length;
  l.downsample = model_->models->codec.config().downsample;
  l.max_samples = config_.max_samples;
  l.defaults = config_.optimize;
  return l;
}

std::string JobService::submit(const json& body) {
  const auto active = model();
  if (!active) throw NoModelError();
  RequestLimits l;
  l.max_length = active->models->transformer.config().max_length;
  l.downsample = active->models->codec.config().downsample;
  l.max_samples = config_.max_samples;
  l.defaults = config_.optimize;
  GenerationRequest request = parse_request(body, l);

  auto job = std::make_unique<Job>();
  job->snap.request = request.to_json();
  job->request = std::move(request);
  job->models = active->models;
  std::string id;
  {
    std::lock_guard lock(mu_);
    char buf[32];
    std::snprintf(buf, sizeof buf, "job-%06llu", static_cast<unsigned long long>(next_id_++));
    id = buf;
    job->snap.id = id;
    jobs_.emplace(id, std::move(job));
    queue_.push_back(id);
  }
  queue_cv_.notify_one();
  return id;
}

JobService::Job& JobService::find(const std::string& id) const {
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) throw UnknownJobError(id);
  return *it->second;
}

JobSnapshot JobService::poll(const std::string& id) const {
  std::lock_guard lock(mu_);
  return find(id).snap;
}

JobSnapshot JobService::cancel(const std::string& id) {
  std::lock_guard lock(mu_);
  Job& job = find(id);
  if (is_terminal(job.snap.status)) return job.snap;
  job.cancel = true;
  if (job.snap.status == JobStatus::pending) {
    queue_.erase(std::remove(queue_.begin(), queue_.end(), id), queue_.end());
    job.snap.status = JobStatus::cancelled;
    changed_.notify_all();
  }
  return job.snap;
}

JobSnapshot JobService::wait(const std::string& id, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  const Job& job = find(id);
  changed_.wait_for(lock, timeout, [&] { return is_terminal(job.snap.status); });
  return job.snap;
}

void JobService::worker_loop() {
  for (;;) {
    Job* job = nullptr;
    {
      std::unique_lock lock(mu_);
      queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      job = &find(queue_.front());
      queue_.pop_front();
      job->snap.status = JobStatus::running;
      changed_.notify_all();
    }
    const int now = ++running_;
    int seen = max_running_.load();
    while (now > seen && !max_running_.compare_exchange_weak(seen, now)) {
    }
    run(*job);
    --running_;
  }
}

void JobService::run(Job& job) {
  const GenerationRequest& r = job.request;
  const double per_sample = 1.0 / r.num_samples;
  const double max_iter = r.optimize.max_iterations;
  auto progress = [&](int sample, const opt::IterationInfo& info) {
    std::lock_guard lock(mu_);
    auto& tail = job.snap.trace_tail;
    tail.push_back({sample, info.iteration, info.objective, info.grad_norm});
    if (static_cast<int>(tail.size()) > config_.trace_tail) tail.erase(tail.begin());
    const double within = std::min(1.0, info.iteration / max_iter);
    job.snap.progress = std::max(job.snap.progress, std::min(1.0, (sample + within) * per_sample));
    return !job.cancel.load();
  };
  JobStatus status = JobStatus::done;
  std::optional<json> result;
  std::string error;
  try {
    if (job.cancel) throw opt::Cancelled();
    opt::GenerateOptions options;
    options.num_samples = r.num_samples;
    const auto samples = opt::generate_motion(r.text, r.trajectory, *job.models, r.seed, r.optimize, options,
                                              progress);
    result = result_to_json(samples, *job.models);
  } catch (const opt::Cancelled&) {
    status = JobStatus::cancelled;
  } catch (const std::exception& e) {
    status = JobStatus::error;
    error = e.what();
  }
  std::lock_guard lock(mu_);
  job.snap.status = status;
  job.snap.error = error;
  if (status == JobStatus::done) {
    job.snap.result = std::move(result);
    job.snap.progress = 1.0;
  }
  changed_.notify_all();
}

}  // namespace tlc::service
