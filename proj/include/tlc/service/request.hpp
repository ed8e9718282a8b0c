// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tlc/motion/trajectory.hpp"
#include "tlc/opt/lbfgs.hpp"
#include "tlc/opt/refine.hpp"

namespace tlc::service {

/// What a request may ask for given the loaded model.
struct RequestLimits {
  int max_length = 64;
  int downsample = 4;
  int max_samples = 16;
  opt::OptimizeConfig defaults;
};

struct GenerationRequest {
  std::string text;
  motion::PartialTrajectory trajectory;  // always `length` frames
  std::uint64_t seed = 0;
  int num_samples = 1;
  opt::OptimizeConfig optimize;

  nlohmann::json to_json() const;
};

/// Wire form {length, controls: [{joint_group, waypoints: [{frame, position}]}]}.
/// Throws ValidationError naming the offending field, e.g.
/// "trajectory.controls[0].joint_group".
motion::PartialTrajectory trajectory_from_json(const nlohmann::json& spec, int max_length,
                                               const std::string& path = "trajectory");
nlohmann::json trajectory_to_json(const motion::PartialTrajectory& traj);

/// Request body {text, trajectory, seed, num_samples, optimize {tolerance, max_iterations}}.
/// A missing trajectory means text-only generation at `limits.max_length` frames.
GenerationRequest parse_request(const nlohmann::json& body, const RequestLimits& limits);

/// {"motions": [{motion, codes, refined, optimizer, control?, unrefined_control?}],
///  "control"?: pooled report}. Contains no timing, so equal inputs give equal bytes.
nlohmann::json result_to_json(const std::vector<opt::GeneratedSample>& samples, const opt::ModelSet& models);

}  // namespace tlc::service
