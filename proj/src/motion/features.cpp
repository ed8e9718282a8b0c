// SPDX-License-Identifier: Apache-2.0
#include "tlc/motion/features.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "tlc/common/error.hpp"

namespace tlc::motion {

namespace {

// Rotation about +y applied to an (x, z) pair.
struct Yaw {
  double c, s;
  explicit Yaw(double angle) : c(std::cos(angle)), s(std::sin(angle)) {}
  Eigen::Vector2d apply(double x, double z) const { return {c * x + s * z, -s * x + c * z}; }
  Eigen::Vector2d apply_transposed(double x, double z) const {
    return {c * x - s * z, s * x + c * z};
  }
  // d/dangle of apply().
  Eigen::Vector2d derivative(double x, double z) const { return {-s * x + c * z, -c * x - s * z}; }
};

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  return a;
}

}  // namespace

void check_layout(const Mat& features, const PoseFeatureLayout& layout) {
  if (layout.num_joints < 2) throw LayoutError("layout needs at least two joints");
  if (features.cols() != layout.feature_dim())
    throw LayoutError("feature width " + std::to_string(features.cols()) + " != layout width " +
                      std::to_string(layout.feature_dim()));
  if (features.rows() < 1) throw LayoutError("motion has no frames");
}

Mat recover_global_positions(const Mat& f, const PoseFeatureLayout& layout) {
  check_layout(f, layout);
  const int T = static_cast<int>(f.rows());
  const int J = layout.num_joints;
  Mat out(T, 3 * J);
  double yaw = 0.0, rx = 0.0, rz = 0.0;
  for (int t = 0; t < T; ++t) {
    const Yaw rot(yaw);
    out(t, 0) = rx;
    out(t, 1) = f(t, PoseFeatureLayout::kRootHeight);
    out(t, 2) = rz;
    for (int j = 1; j < J; ++j) {
      const int c = layout.local_position(j, 0);
      const Eigen::Vector2d xz = rot.apply(f(t, c), f(t, c + 2));
      out(t, 3 * j) = xz.x() + rx;
      out(t, 3 * j + 1) = f(t, c + 1);
      out(t, 3 * j + 2) = xz.y() + rz;
    }
    const Eigen::Vector2d step = rot.apply(f(t, PoseFeatureLayout::kRootLinearVelocity),
                                           f(t, PoseFeatureLayout::kRootLinearVelocity + 1));
    rx += step.x();
    rz += step.y();
    yaw += f(t, PoseFeatureLayout::kRootYawVelocity);
  }
  return out;
}

Mat recover_global_positions(const MotionClip& clip, const PoseFeatureLayout& layout) {
  return recover_global_positions(clip.features, layout);
}

Mat recover_global_positions_vjp(const Mat& f, const Mat& g, const PoseFeatureLayout& layout) {
  check_layout(f, layout);
  const int T = static_cast<int>(f.rows());
  const int J = layout.num_joints;
  if (g.rows() != T || g.cols() != 3 * J) throw ShapeError("position gradient has wrong shape");

  std::vector<double> yaw(T);
  double acc = 0.0;
  for (int t = 0; t < T; ++t) {
    yaw[t] = acc;
    acc += f(t, PoseFeatureLayout::kRootYawVelocity);
  }

  Mat df = Mat::Zero(T, f.cols());
  // Suffix sums over later frames: root-xz gradient and yaw gradient.
  Eigen::Vector2d later_root = Eigen::Vector2d::Zero();
  double later_yaw = 0.0;
  for (int t = T - 1; t >= 0; --t) {
    const Yaw rot(yaw[t]);
    Eigen::Vector2d root_grad(g(t, 0), g(t, 2));
    double yaw_grad = 0.0;
    df(t, PoseFeatureLayout::kRootHeight) = g(t, 1);
    for (int j = 1; j < J; ++j) {
      const int c = layout.local_position(j, 0);
      const double gx = g(t, 3 * j), gz = g(t, 3 * j + 2);
      const Eigen::Vector2d dl = rot.apply_transposed(gx, gz);
      df(t, c) = dl.x();
      df(t, c + 1) = g(t, 3 * j + 1);
      df(t, c + 2) = dl.y();
      const Eigen::Vector2d dr = rot.derivative(f(t, c), f(t, c + 2));
      yaw_grad += gx * dr.x() + gz * dr.y();
      root_grad += Eigen::Vector2d(gx, gz);
    }
    const double vx = f(t, PoseFeatureLayout::kRootLinearVelocity);
    const double vz = f(t, PoseFeatureLayout::kRootLinearVelocity + 1);
    const Eigen::Vector2d dv = rot.apply_transposed(later_root.x(), later_root.y());
    df(t, PoseFeatureLayout::kRootLinearVelocity) = dv.x();
    df(t, PoseFeatureLayout::kRootLinearVelocity + 1) = dv.y();
    yaw_grad += rot.derivative(vx, vz).dot(later_root);
    df(t, PoseFeatureLayout::kRootYawVelocity) = later_yaw;

    later_root += root_grad;
    later_yaw += yaw_grad;
  }
  return df;
}

std::vector<double> hip_yaw(const Mat& p, const SkeletonSpec& skeleton) {
  std::vector<double> yaw(p.rows());
  for (Eigen::Index t = 0; t < p.rows(); ++t) {
    const double ax = p(t, 3 * skeleton.left_hip) - p(t, 3 * skeleton.right_hip);
    const double az = p(t, 3 * skeleton.left_hip + 2) - p(t, 3 * skeleton.right_hip + 2);
    if (std::hypot(ax, az) < 1e-9)
      throw InputError("hip line is vertical at frame " + std::to_string(t) +
                       "; root yaw is not recoverable");
    // At zero yaw the left hip lies at -z of the right hip.
    yaw[t] = std::atan2(-ax, -az);
  }
  return yaw;
}

Mat canonicalize_positions(const Mat& p, const SkeletonSpec& skeleton) {
  const int J = skeleton.num_joints();
  if (p.cols() != 3 * J) throw LayoutError("positions width does not match skeleton");
  if (p.rows() < 1) throw InsufficientFramesError("no frames");
  const double yaw0 = hip_yaw(p.topRows(1), skeleton)[0];
  const double ox = p(0, 0), oz = p(0, 2);
  // Undo the first frame's yaw: world = R(yaw0) * canonical.
  const Yaw rot(yaw0);
  Mat out(p.rows(), p.cols());
  for (Eigen::Index t = 0; t < p.rows(); ++t) {
    for (int j = 0; j < J; ++j) {
      const Eigen::Vector2d xz = rot.apply_transposed(p(t, 3 * j) - ox, p(t, 3 * j + 2) - oz);
      out(t, 3 * j) = xz.x();
      out(t, 3 * j + 1) = p(t, 3 * j + 1);
      out(t, 3 * j + 2) = xz.y();
    }
  }
  return out;
}

MotionClip features_from_positions(const Mat& positions, const SkeletonSpec& skeleton,
                                   double fps) {
  const int J = skeleton.num_joints();
  if (positions.cols() != 3 * J) throw LayoutError("positions width does not match skeleton");
  const int T = static_cast<int>(positions.rows());
  if (T < 2) throw InsufficientFramesError("feature extraction needs at least two frames");

  const Mat p = canonicalize_positions(positions, skeleton);
  const std::vector<double> yaw = hip_yaw(p, skeleton);
  const PoseFeatureLayout layout = PoseFeatureLayout::for_skeleton(skeleton);

  MotionClip clip;
  clip.fps = fps;
  clip.features = Mat::Zero(T, layout.feature_dim());
  Mat& f = clip.features;
  for (int t = 0; t < T; ++t) {
    const Yaw rot(yaw[t]);
    const double rx = p(t, 0), rz = p(t, 2);
    if (t + 1 < T) {
      f(t, PoseFeatureLayout::kRootYawVelocity) = wrap_angle(yaw[t + 1] - yaw[t]);
      const Eigen::Vector2d v = rot.apply_transposed(p(t + 1, 0) - rx, p(t + 1, 2) - rz);
      f(t, PoseFeatureLayout::kRootLinearVelocity) = v.x();
      f(t, PoseFeatureLayout::kRootLinearVelocity + 1) = v.y();
      for (int j = 0; j < J; ++j)
        for (int c = 0; c < 3; ++c)
          f(t, layout.joint_velocity(j, c)) = p(t + 1, 3 * j + c) - p(t, 3 * j + c);
    }
    f(t, PoseFeatureLayout::kRootHeight) = p(t, 1);
    for (int j = 1; j < J; ++j) {
      const Eigen::Vector2d xz = rot.apply_transposed(p(t, 3 * j) - rx, p(t, 3 * j + 2) - rz);
      f(t, layout.local_position(j, 0)) = xz.x();
      f(t, layout.local_position(j, 1)) = p(t, 3 * j + 1);
      f(t, layout.local_position(j, 2)) = xz.y();
    }
    // The last frame reuses the previous frame's displacement for contacts.
    const int a = t + 1 < T ? t : t - 1;
    for (int k = 0; k < PoseFeatureLayout::kNumContacts; ++k) {
      const int j = skeleton.contact_joints[k];
      const double speed = (p.block(a + 1, 3 * j, 1, 3) - p.block(a, 3 * j, 1, 3)).norm();
      f(t, layout.foot_contacts() + k) = speed < kContactSpeed ? 1.0 : 0.0;
    }
  }
  return clip;
}

GroupPartition::GroupPartition(std::vector<std::vector<int>> blocks, int feature_dim)
    : blocks_(std::move(blocks)), feature_dim_(feature_dim) {
  std::vector<int> owner(feature_dim, -1);
  for (int b = 0; b < num_blocks(); ++b) {
    for (int c : blocks_[b]) {
      if (c < 0 || c >= feature_dim) throw PartitionError("channel out of range");
      if (owner[c] != -1) throw PartitionError("channel " + std::to_string(c) + " owned twice");
      owner[c] = b;
    }
  }
  for (int c = 0; c < feature_dim; ++c)
    if (owner[c] == -1) throw PartitionError("channel " + std::to_string(c) + " is unassigned");
}

GroupPartition GroupPartition::by_groups(const SkeletonSpec& skeleton,
                                         const PoseFeatureLayout& layout) {
  if (layout.num_joints != skeleton.num_joints())
    throw LayoutError("layout and skeleton disagree on joint count");
  std::vector<std::vector<int>> blocks(kNumGroups);
  auto& root = blocks[index(Group::root)];
  for (int c = 0; c < PoseFeatureLayout::kLocalPositions; ++c) root.push_back(c);
  // Collect per joint, then sort so every block keeps layout order.
  for (int j = 0; j < skeleton.num_joints(); ++j) {
    auto& block = blocks[index(skeleton.group_of[j])];
    for (int c = 0; c < 3; ++c) {
      if (j > 0) block.push_back(layout.local_position(j, c));
      block.push_back(layout.joint_velocity(j, c));
    }
  }
  for (int k = 0; k < PoseFeatureLayout::kNumContacts; ++k)
    root.push_back(layout.foot_contacts() + k);
  for (auto& b : blocks) std::sort(b.begin(), b.end());
  return GroupPartition(std::move(blocks), layout.feature_dim());
}

GroupPartition GroupPartition::whole_body(const PoseFeatureLayout& layout) {
  std::vector<int> all(layout.feature_dim());
  for (int c = 0; c < layout.feature_dim(); ++c) all[c] = c;
  return GroupPartition({std::move(all)}, layout.feature_dim());
}

std::vector<Mat> GroupPartition::split(const Mat& features) const {
  if (features.cols() != feature_dim_) throw LayoutError("feature width does not match partition");
  std::vector<Mat> out;
  out.reserve(blocks_.size());
  for (const auto& channels : blocks_) {
    Mat b(features.rows(), static_cast<Eigen::Index>(channels.size()));
    for (std::size_t i = 0; i < channels.size(); ++i) b.col(i) = features.col(channels[i]);
    out.push_back(std::move(b));
  }
  return out;
}

Mat GroupPartition::merge(const std::vector<Mat>& blocks) const {
  if (static_cast<int>(blocks.size()) != num_blocks()) throw ShapeError("wrong number of blocks");
  const Eigen::Index T = blocks.empty() ? 0 : blocks[0].rows();
  Mat out(T, feature_dim_);
  for (int b = 0; b < num_blocks(); ++b) {
    if (blocks[b].rows() != T || blocks[b].cols() != width(b))
      throw ShapeError("block " + std::to_string(b) + " has the wrong shape");
    for (int i = 0; i < width(b); ++i) out.col(blocks_[b][i]) = blocks[b].col(i);
  }
  return out;
}

std::vector<Mat> split_by_groups(const MotionClip& clip, const SkeletonSpec& skeleton) {
  const auto layout = PoseFeatureLayout::for_skeleton(skeleton);
  check_layout(clip.features, layout);
  return GroupPartition::by_groups(skeleton, layout).split(clip.features);
}

Mat merge_groups(const std::vector<Mat>& blocks, const SkeletonSpec& skeleton) {
  return GroupPartition::by_groups(skeleton, PoseFeatureLayout::for_skeleton(skeleton))
      .merge(blocks);
}

}  // namespace tlc::motion
