// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tlc/data/corpus.hpp"

namespace tlc::data {

/// Motion JSON: {"fps", "num_joints", "frames", "feature_dim", "features",
/// "global_positions" (optional)}.
nlohmann::json motion_to_json(const motion::MotionClip& clip, const motion::PoseFeatureLayout& layout,
                              bool with_positions = true);
/// Throws LayoutError on shape mismatch, InputError on malformed or non-finite input.
motion::MotionClip motion_from_json(const nlohmann::json& j, const motion::PoseFeatureLayout& layout);

nlohmann::json stats_to_json(const NormStats& stats);
NormStats stats_from_json(const nlohmann::json& j);

/// One JSON object per line: {"text", "true_length", "motion"}.
void write_corpus(const std::filesystem::path& path, const Corpus& corpus,
                  const motion::PoseFeatureLayout& layout);
/// Reads samples back; trajectories are re-extracted, split and stats are not stored.
std::vector<CorpusSample> read_corpus(const std::filesystem::path& path,
                                      const motion::SkeletonSpec& skeleton);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace tlc::data
