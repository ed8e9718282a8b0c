// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tlc/common/rng.hpp"
#include "tlc/motion/features.hpp"
#include "tlc/motion/trajectory.hpp"

namespace tlc::data {

/// Parametric motion families of the procedural corpus.
enum class Family {
  walk_straight,
  walk_arc,
  walk_circle,
  turn_in_place,
  reach,
  squat,
  wave,
  circle_then_raise_hand,
  walk_then_squat,
};

inline constexpr int kNumFamilies = 9;
std::string family_name(Family f);

struct GeneratorConfig {
  int max_length = 196;  // clips are padded to this many frames
  int min_length = 0;    // 0 selects 3/4 of max_length
  double fps = 20.0;
  std::vector<Family> families;  // empty selects every family

  int effective_min_length() const;
  /// Throws ConfigError when the configuration cannot produce clips.
  void validate() const;
};

/// Knobs of one generated motion. Speeds are meters per frame.
struct MotionParams {
  Family family = Family::walk_straight;
  int length = 64;
  double speed = 0.035;
  double turn_rate = 0.0;   // rad/frame, positive turns left
  double radius = 1.0;      // circle radius (m)
  bool left = false;        // side used by reach/wave, turn direction
  double amplitude = 1.0;   // reach/raise angle or squat depth scale
  int repetitions = 1;      // squats, waves
};

struct NormStats {
  RowVec mean;
  RowVec std;

  static constexpr double kMinStd = 1e-6;
};

struct CorpusSample {
  motion::MotionClip motion;  // padded to max_length
  std::string text;
  motion::PartialTrajectory full_trajectories;
  int true_length = 0;
  Family family = Family::walk_straight;
  MotionParams params;
};

struct Corpus {
  std::vector<CorpusSample> samples;
  NormStats stats;  // computed over the training split
  std::vector<int> train, validation, test;
};

/// Global T x 3J positions of one parametric motion (canonical frame, not padded).
Mat synthesize_positions(const MotionParams& params, const motion::SkeletonSpec& skeleton);

/// Draws motion parameters and the matching description.
MotionParams sample_params(Family family, int length, CounterRng& rng);
std::string describe(const MotionParams& params, CounterRng& rng);

/// Pads to `length` frames by repeating the last frame with velocities zeroed.
motion::MotionClip pad_clip(const motion::MotionClip& clip, int length,
                            const motion::PoseFeatureLayout& layout);

/// 80/10/10 split by sample index after a seeded shuffle.
void split_indices(int count, std::uint64_t seed, std::vector<int>& train,
                   std::vector<int>& validation, std::vector<int>& test);

/// Deterministic in (config, count, seed); sample i uses stream (seed, i).
Corpus generate_corpus(const GeneratorConfig& config, int count, std::uint64_t seed,
                       const motion::SkeletonSpec& skeleton = motion::SkeletonSpec::humanoid22());

/// Splits `samples` with `seed` and computes training-split statistics.
Corpus assemble_corpus(std::vector<CorpusSample> samples, std::uint64_t seed);

/// Key-joint tracks of a clip; every frame is specified.
motion::PartialTrajectory extract_key_trajectories(const motion::MotionClip& clip,
                                                   const motion::SkeletonSpec& skeleton);

/// Per-channel mean/std over the first true_length frames of the given samples.
NormStats compute_norm_stats(const std::vector<const CorpusSample*>& samples);
Mat normalize(const Mat& features, const NormStats& stats);
Mat denormalize(const Mat& normalized, const NormStats& stats);
motion::MotionClip normalize(const motion::MotionClip& clip, const NormStats& stats);
motion::MotionClip denormalize(const motion::MotionClip& clip, const NormStats& stats);

}  // namespace tlc::data
