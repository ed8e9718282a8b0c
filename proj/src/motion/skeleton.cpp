// SPDX-License-Identifier: Apache-2.0
#include "tlc/motion/skeleton.hpp"

#include <algorithm>

#include "tlc/common/error.hpp"

namespace tlc::motion {

namespace {
constexpr std::array<std::string_view, kNumGroups> kGroupNames = {
    "head", "left_arm", "right_arm", "left_leg", "right_leg", "root"};
constexpr std::array<std::string_view, kNumGroups> kControlNames = {
    "head", "left_hand", "right_hand", "left_foot", "right_foot", "root"};
}  // namespace

std::string_view group_name(Group g) noexcept { return kGroupNames[index(g)]; }

std::optional<Group> group_from_name(std::string_view name) noexcept {
  for (int i = 0; i < kNumGroups; ++i)
    if (kGroupNames[i] == name) return static_cast<Group>(i);
  return std::nullopt;
}

std::string_view control_name(Group g) noexcept { return kControlNames[index(g)]; }

std::optional<Group> group_from_control_name(std::string_view name) noexcept {
  for (int i = 0; i < kNumGroups; ++i)
    if (kControlNames[i] == name) return static_cast<Group>(i);
  return std::nullopt;
}

void SkeletonSpec::validate() const {
  const int n = num_joints();
  if (n < 2) throw ConfigError("skeleton needs at least two joints");
  if (static_cast<int>(parent.size()) != n || static_cast<int>(group_of.size()) != n ||
      static_cast<int>(rest_offsets.size()) != n)
    throw ConfigError("skeleton tables disagree on joint count");
  if (parent[0] != -1) throw ConfigError("joint 0 must be the root");
  for (int j = 1; j < n; ++j)
    if (parent[j] < 0 || parent[j] >= j)
      throw ConfigError("parent of joint " + joint_names[j] + " must precede it");
  if (group_of[0] != Group::root) throw ConfigError("root joint must be in the root group");
  if (std::count(group_of.begin(), group_of.end(), Group::root) != 1)
    throw ConfigError("root group comprises the root joint only");
  for (Group g : kAllGroups) {
    if (std::find(group_of.begin(), group_of.end(), g) == group_of.end())
      throw ConfigError("group " + std::string(group_name(g)) + " has no joints");
    const int k = key_joint(g);
    if (k < 0 || k >= n || group_of[k] != g)
      throw ConfigError("key joint of " + std::string(group_name(g)) + " is not in that group");
  }
  auto in_range = [n](int j) { return j > 0 && j < n; };
  if (!in_range(left_hip) || !in_range(right_hip)) throw ConfigError("hip joints missing");
  for (int j : contact_joints)
    if (!in_range(j)) throw ConfigError("contact joint missing");
}

SkeletonSpec SkeletonSpec::humanoid22() {
  SkeletonSpec s;
  s.joint_names = {"pelvis",      "left_hip",       "right_hip",      "spine1",
                   "left_knee",   "right_knee",     "spine2",         "left_ankle",
                   "right_ankle", "spine3",         "left_foot",      "right_foot",
                   "neck",        "left_collar",    "right_collar",   "head",
                   "left_shoulder", "right_shoulder", "left_elbow",   "right_elbow",
                   "left_wrist",  "right_wrist"};
  s.parent = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};
  using G = Group;
  s.group_of = {G::root,      G::left_leg,  G::right_leg, G::head,      G::left_leg,
                G::right_leg, G::head,      G::left_leg,  G::right_leg, G::head,
                G::left_leg,  G::right_leg, G::head,      G::left_arm,  G::right_arm,
                G::head,      G::left_arm,  G::right_arm, G::left_arm,  G::right_arm,
                G::left_arm,  G::right_arm};
  s.key_joint_of_group = {15, 20, 21, 7, 8, 0};
  using V = Eigen::Vector3d;
  s.rest_offsets = {V(0, 0.97, 0),      V(0, -0.09, -0.09),  V(0, -0.09, 0.09),
                    V(0, 0.11, 0),      V(0, -0.40, 0),      V(0, -0.40, 0),
                    V(0, 0.13, 0),      V(0, -0.42, 0),      V(0, -0.42, 0),
                    V(0, 0.05, 0),      V(0.12, -0.06, 0),   V(0.12, -0.06, 0),
                    V(0, 0.22, 0),      V(0, 0.14, -0.07),   V(0, 0.14, 0.07),
                    V(0, 0.13, 0),      V(0, 0.03, -0.11),   V(0, 0.03, 0.11),
                    V(0, -0.27, 0),     V(0, -0.27, 0),      V(0, -0.25, 0),
                    V(0, -0.25, 0)};
  s.left_hip = 1;
  s.right_hip = 2;
  s.contact_joints = {7, 10, 8, 11};
  return s;
}

}  // namespace tlc::motion
