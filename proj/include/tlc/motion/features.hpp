// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "tlc/common/types.hpp"
#include "tlc/motion/skeleton.hpp"

namespace tlc::motion {

/// Channel map of one pose feature frame.
///
///   [0]                    root yaw velocity (rad/frame)
///   [1, 3)                 root linear velocity xz in the root-yaw frame (m/frame)
///   [3]                    root height (m)
///   [4, 4+3(J-1))          local joint positions, joints 1..J-1, root-yaw aligned
///   [.., +3J)              global joint velocities (m/frame)
///   [.., +4)               foot contacts (left heel, left toe, right heel, right toe)
///
/// Velocities are per-frame forward differences; the last frame's velocities are 0.
struct PoseFeatureLayout {
  int num_joints = 22;

  static constexpr int kRootYawVelocity = 0;
  static constexpr int kRootLinearVelocity = 1;
  static constexpr int kRootHeight = 3;
  static constexpr int kLocalPositions = 4;
  static constexpr int kNumContacts = 4;

  int local_positions() const noexcept { return kLocalPositions; }
  int joint_velocities() const noexcept { return kLocalPositions + 3 * (num_joints - 1); }
  int foot_contacts() const noexcept { return joint_velocities() + 3 * num_joints; }
  int feature_dim() const noexcept { return foot_contacts() + kNumContacts; }

  /// Column of joint j's local position component c (j >= 1).
  int local_position(int joint, int c) const noexcept {
    return kLocalPositions + 3 * (joint - 1) + c;
  }
  int joint_velocity(int joint, int c) const noexcept { return joint_velocities() + 3 * joint + c; }

  static PoseFeatureLayout for_skeleton(const SkeletonSpec& s) { return {s.num_joints()}; }
};

struct MotionClip {
  Mat features;  // T x M
  double fps = 20.0;

  int length() const noexcept { return static_cast<int>(features.rows()); }
};

/// Throws LayoutError if `features` has the wrong width or no frames.
void check_layout(const Mat& features, const PoseFeatureLayout& layout);

/// Integrates root velocities and places local joint positions in the world.
/// Returns T x 3J global positions (row t, column 3j + c). Reads only the root
/// yaw/linear velocity, root height and local position channels.
Mat recover_global_positions(const Mat& features, const PoseFeatureLayout& layout);
Mat recover_global_positions(const MotionClip& clip, const PoseFeatureLayout& layout);

/// Vector-Jacobian product of recover_global_positions: maps dL/dpositions
/// (T x 3J) to dL/dfeatures (T x M). Channels recovery does not read get 0.
Mat recover_global_positions_vjp(const Mat& features, const Mat& grad_positions,
                                 const PoseFeatureLayout& layout);

/// Root yaw of each frame from the hip line projected on the ground plane.
/// Throws InputError where the hip line is vertical.
std::vector<double> hip_yaw(const Mat& positions, const SkeletonSpec& skeleton);

/// Moves the first frame's root to the xz origin and rotates it to zero yaw.
Mat canonicalize_positions(const Mat& positions, const SkeletonSpec& skeleton);

/// Builds pose features from global positions. The motion is canonicalized
/// first, so recovery reproduces canonicalize_positions(positions).
MotionClip features_from_positions(const Mat& positions, const SkeletonSpec& skeleton,
                                   double fps);

/// Contact speed threshold (m/frame).
inline constexpr double kContactSpeed = 0.005;

/// Assignment of feature channels to blocks (one per joint group, or a single
/// whole-body block). Channels inside a block keep their layout order.
class GroupPartition {
 public:
  GroupPartition() = default;
  GroupPartition(std::vector<std::vector<int>> blocks, int feature_dim);

  static GroupPartition by_groups(const SkeletonSpec& skeleton, const PoseFeatureLayout& layout);
  static GroupPartition whole_body(const PoseFeatureLayout& layout);

  int num_blocks() const noexcept { return static_cast<int>(blocks_.size()); }
  int feature_dim() const noexcept { return feature_dim_; }
  int width(int block) const { return static_cast<int>(blocks_.at(block).size()); }
  const std::vector<int>& channels(int block) const { return blocks_.at(block); }

  std::vector<Mat> split(const Mat& features) const;
  Mat merge(const std::vector<Mat>& blocks) const;

 private:
  std::vector<std::vector<int>> blocks_;
  int feature_dim_ = 0;
};

/// Six group blocks [head, left arm, right arm, left leg, right leg, root].
std::vector<Mat> split_by_groups(const MotionClip& clip, const SkeletonSpec& skeleton);
Mat merge_groups(const std::vector<Mat>& blocks, const SkeletonSpec& skeleton);

}  // namespace tlc::motion
