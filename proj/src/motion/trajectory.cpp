// SPDX-License-Identifier: Apache-2.0
#include "tlc/motion/trajectory.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "tlc/common/error.hpp"

namespace tlc::motion {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

PartialTrajectory::PartialTrajectory(int length)
    : length_(length),
      waypoints_(Mat::Constant(length, 3 * kNumGroups, kNaN)),
      mask_(static_cast<std::size_t>(length) * kNumGroups, 0) {
  if (length < 0) throw InputError("trajectory length must be non-negative");
}

Eigen::Vector3d PartialTrajectory::waypoint(int frame, Group g) const {
  if (!specified(frame, g))
    throw InputError("waypoint at frame " + std::to_string(frame) + " is unspecified");
  return waypoints_.block<1, 3>(frame, 3 * index(g)).transpose();
}

void PartialTrajectory::set(int frame, Group g, const Eigen::Vector3d& position) {
  if (frame < 0 || frame >= length_) throw InputError("frame out of range");
  if (!position.allFinite()) throw InputError("waypoint must be finite");
  waypoints_.block<1, 3>(frame, 3 * index(g)) = position.transpose();
  mask_[slot(frame, g)] = 1;
}

void PartialTrajectory::clear(int frame, Group g) {
  waypoints_.block<1, 3>(frame, 3 * index(g)).setConstant(kNaN);
  mask_[slot(frame, g)] = 0;
}

void PartialTrajectory::clear_group(Group g) {
  for (int t = 0; t < length_; ++t) clear(t, g);
}

int PartialTrajectory::count_specified() const noexcept {
  return static_cast<int>(std::count(mask_.begin(), mask_.end(), std::uint8_t{1}));
}

int PartialTrajectory::count_specified(Group g) const noexcept {
  int n = 0;
  for (int t = 0; t < length_; ++t) n += specified(t, g) ? 1 : 0;
  return n;
}

PartialTrajectory PartialTrajectory::restricted_to(const std::vector<Group>& groups) const {
  PartialTrajectory out(length_);
  for (Group g : groups)
    for (int t = 0; t < length_; ++t)
      if (specified(t, g)) out.set(t, g, waypoint(t, g));
  return out;
}

PartialTrajectory PartialTrajectory::resized(int length) const {
  PartialTrajectory out(length);
  for (int t = 0; t < std::min(length, length_); ++t)
    for (Group g : kAllGroups)
      if (specified(t, g)) out.set(t, g, waypoint(t, g));
  return out;
}

bool operator==(const PartialTrajectory& a, const PartialTrajectory& b) {
  if (a.length_ != b.length_ || a.mask_ != b.mask_) return false;
  for (int t = 0; t < a.length_; ++t)
    for (Group g : kAllGroups)
      if (a.specified(t, g) && a.waypoint(t, g) != b.waypoint(t, g)) return false;
  return true;
}

}  // namespace tlc::motion
