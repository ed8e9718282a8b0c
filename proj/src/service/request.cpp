// SPDX-License-Identifier: Apache-2.0
#include "tlc/service/request.hpp"

#include <cmath>
#include <set>

#include "tlc/common/error.hpp"
#include "tlc/data/io.hpp"
#include "tlc/metrics/metrics.hpp"

namespace tlc::service {

using nlohmann::json;
using motion::Group;
using motion::PartialTrajectory;

namespace {

const json& require(const json& obj, const char* key, const std::string& path) {
  if (!obj.contains(key)) throw ValidationError(path + "." + key, "is required");
  return obj.at(key);
}

int as_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ValidationError(path, "must be an integer");
  const auto x = v.get<std::int64_t>();
  if (x < INT32_MIN || x > INT32_MAX) throw ValidationError(path, "out of range");
  return static_cast<int>(x);
}

double as_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ValidationError(path, "must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ValidationError(path, "must be finite");
  return x;
}

}  // namespace

PartialTrajectory trajectory_from_json(const json& spec, int max_length, const std::string& path) {
  if (!spec.is_object()) throw ValidationError(path, "must be an object");
  const int length = as_int(require(spec, "length", path), path + ".length");
  if (length < 1 || length > max_length)
    throw ValidationError(path + ".length", "must be in [1, " + std::to_string(max_length) + "]");
  PartialTrajectory traj(length);
  if (!spec.contains("controls")) return traj;
  const json& controls = spec.at("controls");
  if (!controls.is_array()) throw ValidationError(path + ".controls", "must be an array");
  std::set<int> seen_groups;
  for (std::size_t c = 0; c < controls.size(); ++c) {
    const std::string cpath = path + ".controls[" + std::to_string(c) + "]";
    const json& control = controls[c];
    if (!control.is_object()) throw ValidationError(cpath, "must be an object");
    const json& name = require(control, "joint_group", cpath);
    if (!name.is_string()) throw ValidationError(cpath + ".joint_group", "must be a string");
    const auto group = motion::group_from_control_name(name.get<std::string>());
    if (!group)
      throw ValidationError(cpath + ".joint_group", "unknown joint group '" + name.get<std::string>() +
                                                        "' (expected root, head, left_hand, right_hand, "
                                                        "left_foot or right_foot)");
    if (!seen_groups.insert(motion::index(*group)).second)
      throw ValidationError(cpath + ".joint_group", "group listed twice");
    const json& waypoints = require(control, "waypoints", cpath);
    if (!waypoints.is_array()) throw ValidationError(cpath + ".waypoints", "must be an array");
    for (std::size_t w = 0; w < waypoints.size(); ++w) {
      const std::string wpath = cpath + ".waypoints[" + std::to_string(w) + "]";
      const json& wp = waypoints[w];
      if (!wp.is_object()) throw ValidationError(wpath, "must be an object");
      const int frame = as_int(require(wp, "frame", wpath), wpath + ".frame");
      if (frame < 0 || frame >= length)
        throw ValidationError(wpath + ".frame", "must be in [0, " + std::to_string(length) + ")");
      if (traj.specified(frame, *group)) throw ValidationError(wpath + ".frame", "duplicate frame");
      const json& pos = require(wp, "position", wpath);
      if (!pos.is_array() || pos.size() != 3)
        throw ValidationError(wpath + ".position", "must be [x, y, z]");
      Eigen::Vector3d p;
      for (int k = 0; k < 3; ++k) p[k] = as_number(pos[k], wpath + ".position[" + std::to_string(k) + "]");
      traj.set(frame, *group, p);
    }
  }
  return traj;
}

json trajectory_to_json(const PartialTrajectory& traj) {
  json controls = json::array();
  for (Group g : motion::kAllGroups) {
    if (traj.count_specified(g) == 0) continue;
    json waypoints = json::array();
    for (int t = 0; t < traj.length(); ++t) {
      if (!traj.specified(t, g)) continue;
      const Eigen::Vector3d p = traj.waypoint(t, g);
      waypoints.push_back({{"frame", t}, {"position", {p.x(), p.y(), p.z()}}});
    }
    controls.push_back({{"joint_group", std::string(motion::control_name(g))}, {"waypoints", waypoints}});
  }
  return {{"length", traj.length()}, {"controls", controls}};
}

GenerationRequest parse_request(const json& body, const RequestLimits& limits) {
  if (!body.is_object()) throw ValidationError("body", "must be a JSON object");
  GenerationRequest r;
  if (body.contains("text")) {
    if (!body.at("text").is_string()) throw ValidationError("text", "must be a string");
    r.text = body.at("text").get<std::string>();
  }
  if (body.contains("trajectory") && !body.at("trajectory").is_null())
    r.trajectory = trajectory_from_json(body.at("trajectory"), limits.max_length);
  else
    r.trajectory = PartialTrajectory(limits.max_length);
  if (r.trajectory.length() % limits.downsample != 0)
    throw ValidationError("trajectory.length",
                          "must be a multiple of " + std::to_string(limits.downsample));
  if (r.text.find_first_not_of(" \t\r\n") == std::string::npos && r.trajectory.empty())
    throw ValidationError("text", "text and trajectory controls are both empty");

  if (body.contains("seed")) {
    const json& s = body.at("seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0))
      throw ValidationError("seed", "must be a non-negative integer");
    r.seed = s.get<std::uint64_t>();
  }
  if (body.contains("num_samples")) {
    r.num_samples = as_int(body.at("num_samples"), "num_samples");
    if (r.num_samples < 1 || r.num_samples > limits.max_samples)
      throw ValidationError("num_samples", "must be in [1, " + std::to_string(limits.max_samples) + "]");
  }
  r.optimize = limits.defaults;
  if (body.contains("optimize")) {
    const json& o = body.at("optimize");
    if (!o.is_object()) throw ValidationError("optimize", "must be an object");
    if (o.contains("tolerance")) {
      r.optimize.tolerance = as_number(o.at("tolerance"), "optimize.tolerance");
      if (!(r.optimize.tolerance > 0.0)) throw ValidationError("optimize.tolerance", "must be positive");
    }
    if (o.contains("max_iterations")) {
      r.optimize.max_iterations = as_int(o.at("max_iterations"), "optimize.max_iterations");
      if (r.optimize.max_iterations < 1 || r.optimize.max_iterations > 100000)
        throw ValidationError("optimize.max_iterations", "must be in [1, 100000]");
    }
  }
  return r;
}

json GenerationRequest::to_json() const {
  return {{"text", text},
          {"trajectory", trajectory_to_json(trajectory)},
          {"seed", seed},
          {"num_samples", num_samples},
          {"optimize", {{"tolerance", optimize.tolerance}, {"max_iterations", optimize.max_iterations}}}};
}

json result_to_json(const std::vector<opt::GeneratedSample>& samples, const opt::ModelSet& models) {
  const vq::Codec& codec = models.codec;
  json motions = json::array();
  for (const auto& s : samples) {
    json m;
    m["motion"] = data::motion_to_json(s.motion, codec.layout(), true);
    json codes = json::array();
    for (Eigen::Index t = 0; t < s.codes.rows(); ++t) {
      json row = json::array();
      for (Eigen::Index b = 0; b < s.codes.cols(); ++b) row.push_back(s.codes(t, b));
      codes.push_back(row);
    }
    m["codes"] = codes;
    m["refined"] = s.refined;
    m["optimizer"] = opt::trace_to_json(s.trace);
    if (s.control) m["control"] = s.control->to_json();
    if (s.unrefined_control) m["unrefined_control"] = s.unrefined_control->to_json();
    motions.push_back(std::move(m));
  }
  json out{{"motions", motions}};
  if (!samples.empty() && samples.front().control) {
    double sum = 0.0, traj = 0.0, loc = 0.0;
    int keyframes = 0, tracks = 0;
    for (const auto& s : samples) {
      sum += s.control->avg_err_cm * s.control->keyframes;
      loc += s.control->loc_err_fraction * s.control->keyframes;
      traj += s.control->traj_err_fraction * s.control->tracks;
      keyframes += s.control->keyframes;
      tracks += s.control->tracks;
    }
    metrics::ControlErrorReport pooled;
    pooled.threshold_m = samples.front().control->threshold_m;
    pooled.keyframes = keyframes;
    pooled.tracks = tracks;
    pooled.avg_err_cm = keyframes ? sum / keyframes : 0.0;
    pooled.loc_err_fraction = keyframes ? loc / keyframes : 0.0;
    pooled.traj_err_fraction = tracks ? traj / tracks : 0.0;
    out["control"] = pooled.to_json();
  }
  return out;
}

}  // namespace tlc::service
