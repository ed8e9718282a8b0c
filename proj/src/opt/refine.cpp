// SPDX-License-Identifier: Apache-2.0
#include "tlc/opt/refine.hpp"

#include <algorithm>
#include <cctype>

#include "tlc/common/error.hpp"
#include "tlc/nn/container.hpp"
#include "tlc/nn/ops.hpp"

namespace tlc::opt {

using motion::Group;
using motion::PartialTrajectory;
using nn::Var;
using RowMajorMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

PositionDecoder codec_position_decoder(const vq::Codec& codec, const data::NormStats& stats) {
  PositionDecoder d;
  for (Group g : motion::kAllGroups) d.key_joints[motion::index(g)] = codec.skeleton().key_joint(g);
  const motion::PoseFeatureLayout layout = codec.layout();
  d.positions = [&codec, stats, layout](nn::Graph& g, Var latent) {
    Var x = codec.decode(g, latent);
    x = nn::add_row(nn::mul_row(x, g.constant(stats.std)), g.constant(stats.mean));
    Mat features = x.value();
    Mat value = motion::recover_global_positions(features, layout);
    return nn::custom(x, std::move(value), [features = std::move(features), layout](const Mat& grad) {
      return motion::recover_global_positions_vjp(features, grad, layout);
    });
  };
  return d;
}

double objective_and_gradient(const Mat& latent, const PartialTrajectory& traj,
                              const PositionDecoder& decoder, Mat& gradient) {
  if (traj.empty()) {
    gradient = Mat::Zero(latent.rows(), latent.cols());
    return 0.0;
  }
  nn::Graph g;
  Var z = g.input(latent);
  Var pos = decoder.positions(g, z);
  if (pos.rows() != traj.length())
    throw ShapeError("trajectory has " + std::to_string(traj.length()) + " frames, decoder yields " +
                     std::to_string(pos.rows()));
  Mat target = Mat::Zero(pos.rows(), pos.cols());
  Mat weight = Mat::Zero(pos.rows(), pos.cols());
  for (Group grp : motion::kAllGroups) {
    const int j = decoder.key_joints[motion::index(grp)];
    for (int t = 0; t < traj.length(); ++t) {
      if (!traj.specified(t, grp)) continue;
      target.block(t, 3 * j, 1, 3) = traj.waypoint(t, grp).transpose();
      weight.block(t, 3 * j, 1, 3).setOnes();
    }
  }
  Var loss = nn::weighted_mse(pos, target, weight);
  g.backward(loss);
  gradient = z.grad();
  return loss.scalar();
}

double objective_and_gradient(const Mat& latent, const PartialTrajectory& traj,
                              const vq::Codec& codec, const data::NormStats& stats, Mat& gradient) {
  return objective_and_gradient(latent, traj, codec_position_decoder(codec, stats), gradient);
}

RefineResult refine_latent(const vq::LatentSequence& initial, const PartialTrajectory& traj,
                           const PositionDecoder& decoder, const OptimizeConfig& config,
                           const IterationCallback& on_iteration) {
  config.validate();
  RefineResult r;
  r.latent = initial;
  if (traj.empty()) {
    r.converged = true;
    return r;
  }
  const Eigen::Index rows = initial.values.rows(), cols = initial.values.cols();
  const RowMajorMat start = initial.values;
  Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(start.data(), start.size());
  Mat grad;
  auto fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& out) {
    const Mat latent = Eigen::Map<const RowMajorMat>(x.data(), rows, cols);
    const double f = objective_and_gradient(latent, traj, decoder, grad);
    const RowMajorMat g = grad;
    out = Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
    return f;
  };
  r.trace = minimize_lbfgs(fn, std::move(x0), config, on_iteration);
  r.latent.values = Eigen::Map<const RowMajorMat>(r.trace.x.data(), rows, cols);
  r.latent.quantized = false;
  r.trace.x.resize(0);
  r.iterations = r.trace.iterations;
  r.converged = r.trace.converged;
  r.cancelled = r.trace.cancelled;
  return r;
}

RefineResult refine_latent(const vq::LatentSequence& initial, const PartialTrajectory& traj,
                           const vq::Codec& codec, const data::NormStats& stats,
                           const OptimizeConfig& config, const IterationCallback& on_iteration) {
  RefineResult r = refine_latent(initial, traj, codec_position_decoder(codec, stats), config, on_iteration);
  r.motion.features = data::denormalize(codec.decode(r.latent.values), stats);
  return r;
}

motion::MotionClip joint_ik_baseline(const motion::MotionClip& clip, const PartialTrajectory& traj,
                                     const motion::SkeletonSpec& skeleton, const IkConfig& config) {
  const motion::PoseFeatureLayout layout = motion::PoseFeatureLayout::for_skeleton(skeleton);
  motion::check_layout(clip.features, layout);
  if (traj.length() > clip.length()) throw ShapeError("trajectory is longer than the clip");
  motion::MotionClip out = clip;
  std::vector<int> frames;
  for (int t = 0; t < traj.length(); ++t)
    for (Group g : motion::kAllGroups)
      if (traj.specified(t, g)) {
        frames.push_back(t);
        break;
      }
  if (frames.empty()) return out;
  const int J = layout.num_joints;
  // Height and local positions of a frame only move that frame's joints, so one
  // joint descent step over all constrained frames equals independent per-frame steps.
  for (int step = 0; step < config.steps; ++step) {
    const Mat pos = motion::recover_global_positions(out.features, layout);
    Mat grad = Mat::Zero(pos.rows(), 3 * J);
    for (int t : frames)
      for (Group g : motion::kAllGroups) {
        if (!traj.specified(t, g)) continue;
        const int j = skeleton.key_joint(g);
        grad.block(t, 3 * j, 1, 3) = 2.0 * (pos.block(t, 3 * j, 1, 3) - traj.waypoint(t, g).transpose());
      }
    const Mat df = motion::recover_global_positions_vjp(out.features, grad, layout);
    for (int t : frames) {
      out.features(t, motion::PoseFeatureLayout::kRootHeight) -=
          config.step_size * df(t, motion::PoseFeatureLayout::kRootHeight);
      const int begin = layout.local_positions();
      const int count = 3 * (J - 1);
      out.features.row(t).segment(begin, count) -= config.step_size * df.row(t).segment(begin, count);
    }
  }
  return out;
}

void ModelSet::save(const std::filesystem::path& dir) const {
  nn::Container c;
  codec.save(c, "vq.");
  transformer.save(c, "mtt.");
  c.save(dir);
}

ModelSet ModelSet::load(const std::filesystem::path& dir) {
  const nn::Container c = nn::Container::load(dir);
  vq::Codec codec = vq::Codec::load(c, "vq.");
  mtt::Mtt transformer = mtt::Mtt::load(c, codec.config(), "mtt.");
  return ModelSet{std::move(codec), std::move(transformer)};
}

namespace {

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

std::vector<GeneratedSample> generate_motion(const std::string& text, const PartialTrajectory& traj,
                                             const ModelSet& models, std::uint64_t seed,
                                             const OptimizeConfig& config,
                                             const GenerateOptions& options,
                                             const GenerateProgress& progress) {
  config.validate();
  if (blank(text) && traj.empty()) throw InputError("both text and trajectory are empty");
  if (options.num_samples < 1) throw InputError("num_samples must be at least 1");
  const vq::Codec& codec = models.codec;
  int length = traj.length();
  if (length == 0)
    length = options.default_length > 0 ? options.default_length : models.transformer.config().max_length;
  const PartialTrajectory input = traj.length() == 0 ? PartialTrajectory(length) : traj;
  const mtt::CodeLogits logits = models.transformer.predict(input, text);
  const PositionDecoder decoder = codec_position_decoder(codec, codec.stats());
  const double temperature = models.transformer.config().temperature_end;

  std::vector<GeneratedSample> out;
  for (int i = 0; i < options.num_samples; ++i) {
    CounterRng rng = CounterRng::stream(seed, {0x73616d70ULL, static_cast<std::uint64_t>(i)});
    const mtt::SampledCodes sampled = mtt::sample_codes(logits, temperature, rng, codec.codebooks());
    GeneratedSample s;
    s.codes = sampled.indices;
    vq::LatentSequence latent = sampled.latent;
    const bool constrained = !input.empty();
    if (constrained) {
      const Mat coarse = data::denormalize(codec.decode(latent.values), codec.stats());
      s.unrefined_control = metrics::control_accuracy(
          motion::recover_global_positions(coarse, codec.layout()), input, codec.skeleton());
    }
    if (options.refine && constrained) {
      IterationCallback hook;
      if (progress) hook = [&](const IterationInfo& info) { return progress(i, info); };
      RefineResult r = refine_latent(latent, input, decoder, config, hook);
      if (r.cancelled) throw Cancelled();
      latent = std::move(r.latent);
      s.trace = std::move(r.trace);
      s.refined = true;
    }
    s.motion.features = data::denormalize(codec.decode(latent.values), codec.stats());
    s.positions = motion::recover_global_positions(s.motion.features, codec.layout());
    if (constrained) s.control = metrics::control_accuracy(s.positions, input, codec.skeleton());
    if (progress && !progress(i, IterationInfo{s.trace.iterations, s.trace.objective, 0.0}))
      throw Cancelled();
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace tlc::opt
