// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

namespace tlc::opt {

struct OptimizeConfig {
  double step_size = 0.1;   // initial trial step of every line search
  double tolerance = 1e-6;  // relative objective decrease and gradient max-norm
  int max_iterations = 1000;
  int history_size = 200;
  int max_line_search = 25;

  void validate() const;
  nlohmann::json to_json() const;
  static OptimizeConfig from_json(const nlohmann::json& j);
};

/// Returns f(x) and writes the gradient into `grad` (resized by the callee).
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct IterationInfo {
  int iteration = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
};

/// Called after every accepted step; returning false cancels the run.
using IterationCallback = std::function<bool(const IterationInfo&)>;

struct LbfgsResult {
  Eigen::VectorXd x;                  // best point seen
  double objective = 0.0;
  std::vector<double> objective_trace;  // initial value, then one entry per accepted step
  std::vector<double> grad_norm_trace;  // max-norm, aligned with objective_trace
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  bool cancelled = false;
};

/// Limited-memory BFGS with a strong-Wolfe line search (c1 = 1e-4, c2 = 0.9,
/// cubic interpolation). Stops when the relative objective decrease or the
/// gradient max-norm drops below the tolerance, or at max_iterations.
/// A line search that yields no decrease ends the run with converged = false.
LbfgsResult minimize_lbfgs(const Objective& f, Eigen::VectorXd x0, const OptimizeConfig& config,
                           const IterationCallback& on_iteration = {});

nlohmann::json trace_to_json(const LbfgsResult& result);

}  // namespace tlc::opt
