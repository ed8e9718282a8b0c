// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include <nlohmann/json.hpp>

#include "tlc/common/rng.hpp"
#include "tlc/common/types.hpp"
#include "tlc/motion/skeleton.hpp"
#include "tlc/motion/trajectory.hpp"

namespace tlc::vq {
class Codec;
}

namespace tlc::metrics {

inline constexpr double kDefaultThreshold = 0.5;  // meters

struct ControlErrorReport {
  double traj_err_fraction = 0.0;  // tracks with any keyframe beyond the threshold
  double loc_err_fraction = 0.0;   // keyframes beyond the threshold
  double avg_err_cm = 0.0;         // mean keyframe distance
  double threshold_m = kDefaultThreshold;
  int tracks = 0;
  int keyframes = 0;

  nlohmann::json to_json() const;
};

/// Generated global positions (T x 3J) paired with the trajectory they should follow.
struct ControlCase {
  const Mat* positions = nullptr;
  const motion::PartialTrajectory* trajectory = nullptr;
};

/// Pools every specified (sample, group, frame) entry. A track is a
/// (sample, group) pair with at least one keyframe. Throws
/// UndefinedMetricsError when there are no keyframes.
ControlErrorReport control_accuracy(const std::vector<ControlCase>& cases,
                                    const motion::SkeletonSpec& skeleton,
                                    double threshold_m = kDefaultThreshold);
ControlErrorReport control_accuracy(const Mat& positions, const motion::PartialTrajectory& traj,
                                    const motion::SkeletonSpec& skeleton,
                                    double threshold_m = kDefaultThreshold);

/// Row-major flattening of the first `length` frames.
RowVec flatten(const Mat& features, int length);

/// Mean Euclidean distance over seeded random disjoint pairs (at most
/// num_pairs, at most n/2). Inputs are sorted lexicographically before pairing
/// so the value does not depend on their order. Throws InputError for fewer
/// than two motions or mismatched widths.
double diversity(const std::vector<RowVec>& features, CounterRng& rng, int num_pairs);

/// Mean over groups of the mean pairwise distance inside each group.
/// Throws InputError if any group has fewer than two samples.
double multimodality(const std::vector<std::vector<RowVec>>& groups);

/// Frechet distance between Gaussian fits of two sample sets (rows are
/// samples), with 1e-6 I added to both covariances.
double fid_proxy(const Mat& real, const Mat& generated);

/// FID-proxy features: the codec's encoder output averaged over time.
RowVec fid_features(const vq::Codec& codec, const Mat& normalized);

}  // namespace tlc::metrics
