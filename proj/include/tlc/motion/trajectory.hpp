// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "tlc/common/types.hpp"
#include "tlc/motion/skeleton.hpp"

namespace tlc::motion {

/// Per-group 3-D waypoints over T frames with a presence mask. Unspecified
/// entries hold NaN so that any accidental read poisons downstream values.
class PartialTrajectory {
 public:
  PartialTrajectory() = default;
  explicit PartialTrajectory(int length);

  int length() const noexcept { return length_; }

  bool specified(int frame, Group g) const { return mask_[slot(frame, g)] != 0; }
  Eigen::Vector3d waypoint(int frame, Group g) const;
  void set(int frame, Group g, const Eigen::Vector3d& position);
  void clear(int frame, Group g);
  void clear_group(Group g);

  int count_specified() const noexcept;
  int count_specified(Group g) const noexcept;
  bool empty() const noexcept { return count_specified() == 0; }

  /// Copy restricted to the given groups; others become fully unspecified.
  PartialTrajectory restricted_to(const std::vector<Group>& groups) const;

  /// Copy padded with unspecified frames (or truncated) to `length` frames.
  PartialTrajectory resized(int length) const;

  /// T x 18 waypoint matrix (group g occupies columns 3g..3g+2).
  const Mat& raw_waypoints() const noexcept { return waypoints_; }

  friend bool operator==(const PartialTrajectory& a, const PartialTrajectory& b);

 private:
  std::size_t slot(int frame, Group g) const noexcept {
    return static_cast<std::size_t>(frame) * kNumGroups + static_cast<std::size_t>(index(g));
  }

  int length_ = 0;
  Mat waypoints_;
  std::vector<std::uint8_t> mask_;
};

}  // namespace tlc::motion
