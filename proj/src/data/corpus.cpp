// SPDX-License-Identifier: Apache-2.0
#include "tlc/data/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "tlc/common/error.hpp"

namespace tlc::data {

using motion::Group;
using motion::PoseFeatureLayout;
using motion::SkeletonSpec;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kStride = 1.0;  // meters per gait cycle

// Joint indices of the humanoid the generator animates.
enum Joint : int {
  kPelvis = 0, kLeftHip = 1, kRightHip = 2, kSpine1 = 3, kLeftKnee = 4, kRightKnee = 5,
  kLeftShoulder = 16, kRightShoulder = 17, kLeftElbow = 18, kRightElbow = 19,
};

Eigen::Matrix3d rot_x(double a) { return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitX()).toRotationMatrix(); }
Eigen::Matrix3d rot_y(double a) { return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitY()).toRotationMatrix(); }
Eigen::Matrix3d rot_z(double a) { return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ()).toRotationMatrix(); }

double smoothstep(double lo, double hi, double x) {
  const double t = std::clamp((x - lo) / (hi - lo), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

struct Pose {
  Eigen::Vector2d root = Eigen::Vector2d::Zero();
  double yaw = 0.0;
  std::vector<Eigen::Matrix3d> local;

  explicit Pose(int joints) : local(joints, Eigen::Matrix3d::Identity()) {
    // Arms hang slightly away from the torso.
    local[kLeftShoulder] = rot_x(0.12);
    local[kRightShoulder] = rot_x(-0.12);
  }
};

void apply_gait(Pose& pose, double phase, double amp) {
  const double s = std::sin(phase), c = std::cos(phase);
  pose.local[kLeftHip] = rot_z(0.35 * amp * s);
  pose.local[kRightHip] = rot_z(-0.35 * amp * s);
  pose.local[kLeftKnee] = rot_z(-0.6 * amp * std::max(0.0, c));
  pose.local[kRightKnee] = rot_z(-0.6 * amp * std::max(0.0, -c));
  pose.local[kLeftShoulder] = rot_x(0.12) * rot_z(-0.3 * amp * s);
  pose.local[kRightShoulder] = rot_x(-0.12) * rot_z(0.3 * amp * s);
  pose.local[kLeftElbow] = rot_z(0.2 * amp);
  pose.local[kRightElbow] = rot_z(0.2 * amp);
}

void apply_squat(Pose& pose, double depth) {
  pose.local[kLeftHip] = rot_z(1.3 * depth);
  pose.local[kRightHip] = rot_z(1.3 * depth);
  pose.local[kLeftKnee] = rot_z(-2.0 * depth);
  pose.local[kRightKnee] = rot_z(-2.0 * depth);
  pose.local[kSpine1] = rot_z(-0.45 * depth);
  pose.local[kLeftShoulder] = rot_x(0.12) * rot_z(1.0 * depth);
  pose.local[kRightShoulder] = rot_x(-0.12) * rot_z(1.0 * depth);
}

// Raises one arm: `forward` flexes at the shoulder, `side` abducts.
void apply_arm(Pose& pose, bool left, double forward, double side, double elbow) {
  const int shoulder = left ? kLeftShoulder : kRightShoulder;
  const int el = left ? kLeftElbow : kRightElbow;
  const double sign = left ? 1.0 : -1.0;
  pose.local[shoulder] = rot_x(sign * (0.12 + side)) * rot_z(forward);
  pose.local[el] = rot_z(elbow);
}

// Global positions of one pose; feet are kept on the ground plane.
void forward_kinematics(const Pose& pose, const SkeletonSpec& sk, Mat& out, int row) {
  const int J = sk.num_joints();
  std::vector<Eigen::Matrix3d> rot(J);
  std::vector<Eigen::Vector3d> pos(J);
  rot[0] = rot_y(pose.yaw) * pose.local[0];
  pos[0] = Eigen::Vector3d(pose.root.x(), sk.rest_offsets[0].y(), pose.root.y());
  for (int j = 1; j < J; ++j) {
    const int p = sk.parent[j];
    pos[j] = pos[p] + rot[p] * sk.rest_offsets[j];
    rot[j] = rot[p] * pose.local[j];
  }
  double ground = pos[sk.contact_joints[0]].y();
  for (int j : sk.contact_joints) ground = std::min(ground, pos[j].y());
  for (int j = 0; j < J; ++j) {
    out(row, 3 * j) = pos[j].x();
    out(row, 3 * j + 1) = pos[j].y() - ground;
    out(row, 3 * j + 2) = pos[j].z();
  }
}

Eigen::Vector2d heading(double yaw) { return {std::cos(yaw), -std::sin(yaw)}; }

double gait_amplitude(double speed) { return std::min(1.0, 0.6 + 8.0 * speed); }

template <class T>
const T& pick(const std::vector<T>& options, CounterRng& rng) {
  return options[rng.below(options.size())];
}

}  // namespace

std::string family_name(Family f) {
  switch (f) {
    case Family::walk_straight: return "walk_straight";
    case Family::walk_arc: return "walk_arc";
    case Family::walk_circle: return "walk_circle";
    case Family::turn_in_place: return "turn_in_place";
    case Family::reach: return "reach";
    case Family::squat: return "squat";
    case Family::wave: return "wave";
    case Family::circle_then_raise_hand: return "circle_then_raise_hand";
    case Family::walk_then_squat: return "walk_then_squat";
  }
  return "unknown";
}

int GeneratorConfig::effective_min_length() const {
  return min_length > 0 ? min_length : std::max(8, (3 * max_length + 3) / 4);
}

void GeneratorConfig::validate() const {
  if (max_length < 8) throw ConfigError("T_max must be at least 8 frames");
  if (effective_min_length() > max_length || effective_min_length() < 2)
    throw ConfigError("min_length must lie in [2, T_max]");
  if (!(fps > 0.0)) throw ConfigError("fps must be positive");
}

MotionParams sample_params(Family family, int length, CounterRng& rng) {
  MotionParams p;
  p.family = family;
  p.length = length;
  p.speed = pick<double>({0.02, 0.035, 0.05}, rng);
  p.left = rng.below(2) == 0;
  const double dir = p.left ? 1.0 : -1.0;
  switch (family) {
    case Family::walk_straight:
    case Family::walk_then_squat:
      p.turn_rate = 0.0;
      p.amplitude = rng.uniform(0.7, 1.0);
      break;
    case Family::walk_arc:
      p.radius = pick<double>({2.0, 3.0}, rng);
      p.turn_rate = dir * p.speed / p.radius;
      break;
    case Family::walk_circle:
    case Family::circle_then_raise_hand:
      p.radius = pick<double>({0.8, 1.0, 1.5}, rng);
      p.turn_rate = dir * p.speed / p.radius;
      if (family == Family::circle_then_raise_hand) p.left = rng.below(4) == 0;
      break;
    case Family::turn_in_place:
      p.speed = 0.0;
      p.turn_rate = dir * pick<double>({0.03, 0.05}, rng);
      break;
    case Family::reach:
      p.speed = 0.0;
      p.amplitude = rng.uniform(0.8, 1.1);
      break;
    case Family::squat:
      p.speed = 0.0;
      p.amplitude = rng.uniform(0.6, 1.0);
      p.repetitions = static_cast<int>(rng.between(1, 2));
      break;
    case Family::wave:
      p.speed = 0.0;
      p.repetitions = static_cast<int>(rng.between(2, 4));
      break;
  }
  return p;
}

std::string describe(const MotionParams& p, CounterRng& rng) {
  const std::string side = p.left ? "left" : "right";
  const std::string pace = p.speed <= 0.02 ? "slowly" : p.speed >= 0.05 ? "quickly" : "at a normal pace";
  const std::string subject = pick<std::string>({"a person", "someone", "a man", "a woman"}, rng);
  switch (p.family) {
    case Family::walk_straight:
      return subject + pick<std::string>({" walks forward ", " walks straight ahead "}, rng) + pace;
    case Family::walk_arc:
      return subject + pick<std::string>({" walks forward while turning ", " walks along a curve to the "}, rng) +
             side;
    case Family::walk_circle: {
      const std::string size = p.radius < 0.9 ? "small" : p.radius > 1.2 ? "large" : "";
      return subject + " walks in a " + (size.empty() ? "" : size + " ") + "circle to the " + side +
             " " + pace;
    }
    case Family::turn_in_place:
      return subject + " turns " + side + pick<std::string>({" in place", " on the spot"}, rng);
    case Family::reach:
      return subject + pick<std::string>({" reaches forward with the ", " reaches out with the "}, rng) +
             side + " hand";
    case Family::squat:
      return subject + " squats down " + (p.repetitions == 1 ? "once" : "twice");
    case Family::wave:
      return subject + pick<std::string>({" waves with the ", " waves the "}, rng) + side + " hand";
    case Family::circle_then_raise_hand:
      return subject + " walks in a circle then raises the " + side + " hand";
    case Family::walk_then_squat:
      return subject + " walks forward then squats down";
  }
  return subject + " moves";
}

Mat synthesize_positions(const MotionParams& p, const SkeletonSpec& sk) {
  const int T = p.length;
  if (T < 2) throw ConfigError("motion needs at least two frames");
  Mat out(T, 3 * sk.num_joints());
  Pose pose(sk.num_joints());
  double phase = 0.0;
  const double half = 0.5 * T;
  for (int t = 0; t < T; ++t) {
    const double u = static_cast<double>(t) / static_cast<double>(T - 1);
    Pose frame = pose;
    double speed = p.speed;
    double turn = p.turn_rate;
    double phase_step = 2.0 * kPi * p.speed / kStride;
    switch (p.family) {
      case Family::walk_straight:
      case Family::walk_arc:
      case Family::walk_circle:
        apply_gait(frame, phase, gait_amplitude(p.speed));
        break;
      case Family::turn_in_place:
        phase_step = 2.0 * kPi / 16.0;
        apply_gait(frame, phase, 0.3);
        break;
      case Family::reach: {
        const double r = smoothstep(0.1, 0.55, u);
        apply_arm(frame, p.left, 1.45 * p.amplitude * r, 0.25 * r, 0.0);
        frame.local[kSpine1] = rot_z(-0.25 * r);
        break;
      }
      case Family::squat: {
        const double q = 0.5 * (1.0 - std::cos(2.0 * kPi * p.repetitions * u));
        apply_squat(frame, 0.8 * p.amplitude * q);
        break;
      }
      case Family::wave: {
        const double r = smoothstep(0.0, 0.25, u);
        const double swing = std::sin(2.0 * kPi * p.repetitions * u);
        apply_arm(frame, p.left, 0.3 * r, 2.2 * r, r * (1.0 + 0.5 * swing));
        break;
      }
      case Family::circle_then_raise_hand:
      case Family::walk_then_squat: {
        // Walking fades out over ~8 frames around the midpoint.
        const double walking = 1.0 - smoothstep(half - 4.0, half + 4.0, static_cast<double>(t));
        speed *= walking;
        turn *= walking;
        phase_step *= walking;
        apply_gait(frame, phase, gait_amplitude(p.speed) * walking);
        const double second = smoothstep(half, T - 1.0, static_cast<double>(t));
        if (p.family == Family::circle_then_raise_hand) {
          apply_arm(frame, p.left, 2.6 * second, 0.1 * second, 0.1 * second);
        } else {
          const double q = 0.5 * (1.0 - std::cos(2.0 * kPi * second));
          if (second > 0.0) apply_squat(frame, 0.8 * q);
        }
        break;
      }
    }
    forward_kinematics(frame, sk, out, t);
    pose.root += speed * heading(pose.yaw);
    pose.yaw += turn;
    phase += phase_step;
  }
  return out;
}

motion::MotionClip pad_clip(const motion::MotionClip& clip, int length,
                            const PoseFeatureLayout& layout) {
  motion::check_layout(clip.features, layout);
  if (length < clip.length()) throw InputError("cannot pad to a shorter length");
  motion::MotionClip out;
  out.fps = clip.fps;
  out.features.resize(length, clip.features.cols());
  out.features.topRows(clip.length()) = clip.features;
  RowVec last = clip.features.row(clip.length() - 1);
  last.segment(0, 3).setZero();  // yaw and linear velocity
  last.segment(layout.joint_velocities(), 3 * layout.num_joints).setZero();
  for (int t = clip.length(); t < length; ++t) out.features.row(t) = last;
  return out;
}

void split_indices(int count, std::uint64_t seed, std::vector<int>& train,
                   std::vector<int>& validation, std::vector<int>& test) {
  std::vector<int> order(count);
  for (int i = 0; i < count; ++i) order[i] = i;
  CounterRng rng = CounterRng::stream(seed, {0x53504c4954ULL});
  for (int i = count - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  const int n_train = (count * 8) / 10;
  const int n_val = (count - n_train) / 2;
  train.assign(order.begin(), order.begin() + n_train);
  validation.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  test.assign(order.begin() + n_train + n_val, order.end());
  std::sort(train.begin(), train.end());
  std::sort(validation.begin(), validation.end());
  std::sort(test.begin(), test.end());
}

Corpus generate_corpus(const GeneratorConfig& config, int count, std::uint64_t seed,
                       const SkeletonSpec& skeleton) {
  if (count < 1) throw ConfigError("corpus count must be at least 1");
  config.validate();
  skeleton.validate();
  std::vector<Family> families = config.families;
  if (families.empty())
    for (int f = 0; f < kNumFamilies; ++f) families.push_back(static_cast<Family>(f));

  const auto layout = PoseFeatureLayout::for_skeleton(skeleton);
  Corpus corpus;
  corpus.samples.resize(count);
  for (int i = 0; i < count; ++i) {
    CounterRng rng = CounterRng::stream(seed, {static_cast<std::uint64_t>(i)});
    // Families cycle so every family is represented even in small corpora.
    const Family family = families[static_cast<std::size_t>(i) % families.size()];
    const int length =
        static_cast<int>(rng.between(config.effective_min_length(), config.max_length));
    CorpusSample& s = corpus.samples[i];
    s.params = sample_params(family, length, rng);
    s.family = family;
    s.text = describe(s.params, rng);
    s.true_length = length;
    const Mat positions = synthesize_positions(s.params, skeleton);
    s.motion = pad_clip(motion::features_from_positions(positions, skeleton, config.fps),
                        config.max_length, layout);
    s.full_trajectories = extract_key_trajectories(s.motion, skeleton);
    for (int t = length; t < config.max_length; ++t)
      for (Group g : motion::kAllGroups) s.full_trajectories.clear(t, g);
  }
  return assemble_corpus(std::move(corpus.samples), seed);
}

Corpus assemble_corpus(std::vector<CorpusSample> samples, std::uint64_t seed) {
  if (samples.empty()) throw InputError("corpus has no samples");
  Corpus corpus;
  corpus.samples = std::move(samples);
  split_indices(static_cast<int>(corpus.samples.size()), seed, corpus.train, corpus.validation, corpus.test);
  std::vector<const CorpusSample*> train;
  for (int i : corpus.train) train.push_back(&corpus.samples[i]);
  if (train.empty()) train.push_back(&corpus.samples[0]);
  corpus.stats = compute_norm_stats(train);
  return corpus;
}

motion::PartialTrajectory extract_key_trajectories(const motion::MotionClip& clip,
                                                   const SkeletonSpec& skeleton) {
  const Mat positions =
      motion::recover_global_positions(clip, PoseFeatureLayout::for_skeleton(skeleton));
  motion::PartialTrajectory traj(clip.length());
  for (Group g : motion::kAllGroups) {
    const int j = skeleton.key_joint(g);
    for (int t = 0; t < clip.length(); ++t)
      traj.set(t, g, positions.block<1, 3>(t, 3 * j).transpose());
  }
  return traj;
}

NormStats compute_norm_stats(const std::vector<const CorpusSample*>& samples) {
  if (samples.empty()) throw InputError("no samples for normalization statistics");
  const Eigen::Index M = samples[0]->motion.features.cols();
  RowVec sum = RowVec::Zero(M);
  double n = 0.0;
  for (const CorpusSample* s : samples) {
    if (s->motion.features.cols() != M) throw LayoutError("samples disagree on feature width");
    sum += s->motion.features.topRows(s->true_length).colwise().sum();
    n += s->true_length;
  }
  NormStats stats;
  stats.mean = sum / n;
  RowVec sq = RowVec::Zero(M);
  for (const CorpusSample* s : samples) {
    const Mat centered = s->motion.features.topRows(s->true_length).rowwise() - stats.mean;
    sq += centered.cwiseProduct(centered).colwise().sum();
  }
  stats.std = (sq / n).cwiseSqrt().cwiseMax(NormStats::kMinStd);
  return stats;
}

Mat normalize(const Mat& features, const NormStats& stats) {
  if (features.cols() != stats.mean.cols() || features.cols() != stats.std.cols())
    throw LayoutError("normalization statistics do not match feature width");
  Mat out = features.rowwise() - stats.mean;
  out.array().rowwise() /= stats.std.array();
  return out;
}

Mat denormalize(const Mat& normalized, const NormStats& stats) {
  if (normalized.cols() != stats.mean.cols() || normalized.cols() != stats.std.cols())
    throw LayoutError("normalization statistics do not match feature width");
  Mat out = normalized.array().rowwise() * stats.std.array();
  out.rowwise() += stats.mean;
  return out;
}

motion::MotionClip normalize(const motion::MotionClip& clip, const NormStats& stats) {
  return {normalize(clip.features, stats), clip.fps};
}

motion::MotionClip denormalize(const motion::MotionClip& clip, const NormStats& stats) {
  return {denormalize(clip.features, stats), clip.fps};
}

}  // namespace tlc::data
