// SPDX-License-Identifier: Apache-2.0
#include "tlc/data/io.hpp"

#include <cmath>
#include <fstream>

#include "tlc/common/error.hpp"

namespace tlc::data {

using nlohmann::json;

namespace {

double finite_number(const json& v) {
  if (!v.is_number()) throw InputError("expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw InputError("non-finite number");
  return x;
}

RowVec row_from_json(const json& j) {
  if (!j.is_array()) throw InputError("expected an array");
  RowVec out(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) out(static_cast<Eigen::Index>(i)) = finite_number(j[i]);
  return out;
}

}  // namespace

json motion_to_json(const motion::MotionClip& clip, const motion::PoseFeatureLayout& layout,
                    bool with_positions) {
  motion::check_layout(clip.features, layout);
  json j;
  j["fps"] = clip.fps;
  j["num_joints"] = layout.num_joints;
  j["frames"] = clip.length();
  j["feature_dim"] = layout.feature_dim();
  json features = json::array();
  for (int t = 0; t < clip.length(); ++t) {
    json row = json::array();
    for (Eigen::Index c = 0; c < clip.features.cols(); ++c) row.push_back(clip.features(t, c));
    features.push_back(std::move(row));
  }
  j["features"] = std::move(features);
  if (with_positions) {
    const Mat pos = motion::recover_global_positions(clip, layout);
    json frames = json::array();
    for (int t = 0; t < clip.length(); ++t) {
      json joints = json::array();
      for (int k = 0; k < layout.num_joints; ++k)
        joints.push_back({pos(t, 3 * k), pos(t, 3 * k + 1), pos(t, 3 * k + 2)});
      frames.push_back(std::move(joints));
    }
    j["global_positions"] = std::move(frames);
  }
  return j;
}

motion::MotionClip motion_from_json(const json& j, const motion::PoseFeatureLayout& layout) {
  if (!j.is_object() || !j.contains("features")) throw InputError("motion JSON needs 'features'");
  if (j.value("num_joints", layout.num_joints) != layout.num_joints)
    throw LayoutError("motion JSON joint count does not match the skeleton");
  if (j.value("feature_dim", layout.feature_dim()) != layout.feature_dim())
    throw LayoutError("motion JSON feature_dim does not match the layout");
  const json& rows = j.at("features");
  if (!rows.is_array() || rows.empty()) throw LayoutError("motion JSON has no frames");
  if (j.contains("frames") && j.at("frames").get<std::size_t>() != rows.size())
    throw LayoutError("motion JSON 'frames' disagrees with the feature rows");
  motion::MotionClip clip;
  clip.fps = j.contains("fps") ? finite_number(j.at("fps")) : 20.0;
  clip.features.resize(static_cast<Eigen::Index>(rows.size()), layout.feature_dim());
  for (std::size_t t = 0; t < rows.size(); ++t) {
    const RowVec r = row_from_json(rows[t]);
    if (r.cols() != layout.feature_dim()) throw LayoutError("motion JSON row has the wrong width");
    clip.features.row(static_cast<Eigen::Index>(t)) = r;
  }
  return clip;
}

json stats_to_json(const NormStats& stats) {
  return {{"mean", std::vector<double>(stats.mean.data(), stats.mean.data() + stats.mean.size())},
          {"std", std::vector<double>(stats.std.data(), stats.std.data() + stats.std.size())}};
}

NormStats stats_from_json(const json& j) {
  NormStats s;
  s.mean = row_from_json(j.at("mean"));
  s.std = row_from_json(j.at("std"));
  if (s.mean.size() != s.std.size()) throw LayoutError("stats mean/std widths differ");
  return s;
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus,
                  const motion::PoseFeatureLayout& layout) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  for (const CorpusSample& s : corpus.samples) {
    json line{{"text", s.text},
              {"true_length", s.true_length},
              {"family", family_name(s.family)},
              {"motion", motion_to_json(s.motion, layout, false)}};
    out << line.dump() << '\n';
  }
}

std::vector<CorpusSample> read_corpus(const std::filesystem::path& path,
                                      const motion::SkeletonSpec& skeleton) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  const auto layout = motion::PoseFeatureLayout::for_skeleton(skeleton);
  std::vector<CorpusSample> samples;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    CorpusSample s;
    s.text = j.at("text").get<std::string>();
    s.true_length = j.at("true_length").get<int>();
    s.motion = motion_from_json(j.at("motion"), layout);
    if (s.true_length < 1 || s.true_length > s.motion.length())
      throw InputError("true_length out of range");
    if (j.contains("family")) {
      for (int f = 0; f < kNumFamilies; ++f)
        if (family_name(static_cast<Family>(f)) == j["family"].get<std::string>())
          s.family = static_cast<Family>(f);
    }
    s.params.family = s.family;
    s.params.length = s.true_length;
    s.full_trajectories = extract_key_trajectories(s.motion, skeleton);
    for (int t = s.true_length; t < s.motion.length(); ++t)
      for (motion::Group g : motion::kAllGroups) s.full_trajectories.clear(t, g);
    samples.push_back(std::move(s));
  }
  return samples;
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

}  // namespace tlc::data
