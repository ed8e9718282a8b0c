// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace tlc::motion {

/// The six body partitions, in the order their feature blocks are laid out.
enum class Group : int { head = 0, left_arm, right_arm, left_leg, right_leg, root };

inline constexpr int kNumGroups = 6;
inline constexpr std::array<Group, kNumGroups> kAllGroups = {
    Group::head, Group::left_arm, Group::right_arm, Group::left_leg, Group::right_leg, Group::root};

std::string_view group_name(Group g) noexcept;
std::optional<Group> group_from_name(std::string_view name) noexcept;

/// Name of the group's key joint on the wire ("head", "left_hand", ..., "root").
std::string_view control_name(Group g) noexcept;
std::optional<Group> group_from_control_name(std::string_view name) noexcept;

inline constexpr int index(Group g) noexcept { return static_cast<int>(g); }

struct SkeletonSpec {
  std::vector<std::string> joint_names;
  std::vector<int> parent;                   // root = -1
  std::vector<Group> group_of;
  std::array<int, kNumGroups> key_joint_of_group{};
  std::vector<Eigen::Vector3d> rest_offsets;  // joint position relative to parent, meters

  // Joints the feature extractor needs by role.
  int left_hip = -1;
  int right_hip = -1;
  std::array<int, 4> contact_joints{};  // left heel, left toe, right heel, right toe

  int num_joints() const noexcept { return static_cast<int>(joint_names.size()); }
  int key_joint(Group g) const noexcept { return key_joint_of_group[index(g)]; }

  /// Throws ConfigError if the tree, grouping or role joints are inconsistent.
  void validate() const;

  /// 22-joint humanoid (pelvis-rooted, y-up, facing +x at zero yaw, left side at -z).
  static SkeletonSpec humanoid22();
};

}  // namespace tlc::motion
