// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tlc/metrics/metrics.hpp"
#include "tlc/motion/features.hpp"
#include "tlc/motion/trajectory.hpp"
#include "tlc/mtt/mtt.hpp"
#include "tlc/nn/graph.hpp"
#include "tlc/opt/lbfgs.hpp"
#include "tlc/vq/codec.hpp"

namespace tlc::opt {

/// Differentiable map from a latent (L x W) to global joint positions (T x 3J).
struct PositionDecoder {
  std::function<nn::Var(nn::Graph&, nn::Var latent)> positions;
  std::array<int, motion::kNumGroups> key_joints{};
};

/// decode -> denormalize -> recover_global_positions.
PositionDecoder codec_position_decoder(const vq::Codec& codec, const data::NormStats& stats);

/// Mean squared distance (m^2) between key-joint positions and the specified
/// waypoints, with its exact gradient. 0 with a zero gradient when nothing is specified.
double objective_and_gradient(const Mat& latent, const motion::PartialTrajectory& traj,
                              const PositionDecoder& decoder, Mat& gradient);
double objective_and_gradient(const Mat& latent, const motion::PartialTrajectory& traj,
                              const vq::Codec& codec, const data::NormStats& stats, Mat& gradient);

struct RefineResult {
  vq::LatentSequence latent;
  motion::MotionClip motion;  // denormalized; empty when refining against a bare decoder
  LbfgsResult trace;          // trace.x is left empty
  int iterations = 0;
  bool converged = false;
  bool cancelled = false;

  nlohmann::json trace_json() const { return trace_to_json(trace); }
};

/// L-BFGS over the continuous latent starting from `initial`. A trajectory
/// without specified entries returns `initial` unchanged after 0 iterations.
RefineResult refine_latent(const vq::LatentSequence& initial, const motion::PartialTrajectory& traj,
                           const PositionDecoder& decoder, const OptimizeConfig& config,
                           const IterationCallback& on_iteration = {});
RefineResult refine_latent(const vq::LatentSequence& initial, const motion::PartialTrajectory& traj,
                           const vq::Codec& codec, const data::NormStats& stats,
                           const OptimizeConfig& config, const IterationCallback& on_iteration = {});

struct IkConfig {
  int steps = 50;
  double step_size = 0.05;
};

/// Per-frame gradient descent on the squared key-joint error over that frame's
/// root height and local joint positions. Frames without waypoints are copied.
motion::MotionClip joint_ik_baseline(const motion::MotionClip& clip,
                                     const motion::PartialTrajectory& traj,
                                     const motion::SkeletonSpec& skeleton,
                                     const IkConfig& config = {});

/// Trained codec plus transformer.
struct ModelSet {
  vq::Codec codec;
  mtt::Mtt transformer;

  void save(const std::filesystem::path& dir) const;
  /// Throws LoadError on missing files, version mismatch or missing tensors.
  static ModelSet load(const std::filesystem::path& dir);
};

struct GeneratedSample {
  motion::MotionClip motion;   // denormalized features
  Mat positions;               // T x 3J
  vq::IndexMat codes;          // sampled indices before refinement
  std::optional<metrics::ControlErrorReport> control;  // present when waypoints exist
  std::optional<metrics::ControlErrorReport> unrefined_control;
  LbfgsResult trace;
  bool refined = false;
};

struct GenerateOptions {
  int num_samples = 1;
  bool refine = true;
  /// Frames to generate when the trajectory carries no length; 0 uses the model maximum.
  int default_length = 0;
};

/// Progress hook: (sample index, iteration info); returning false cancels.
using GenerateProgress = std::function<bool(int sample, const IterationInfo&)>;

/// Text and trajectory to motions: predict code logits, draw one Gumbel sample
/// per output, refine each against the trajectory and decode.
/// Throws InputError when both text and trajectory are empty.
std::vector<GeneratedSample> generate_motion(const std::string& text,
                                             const motion::PartialTrajectory& traj,
                                             const ModelSet& models, std::uint64_t seed,
                                             const OptimizeConfig& config,
                                             const GenerateOptions& options = {},
                                             const GenerateProgress& progress = {});

/// Thrown by generate_motion when the progress hook cancels.
class Cancelled : public std::runtime_error {
 public:
  Cancelled() : std::runtime_error("cancelled") {}
};

}  // namespace tlc::opt
