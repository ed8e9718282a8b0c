// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <set>

#include <gtest/gtest.h>

#include "tlc/common/error.hpp"
#include "tlc/mtt/mtt.hpp"
#include "tlc/nn/ops.hpp"

namespace tlc::mtt {
namespace {

using motion::Group;
using motion::kAllGroups;
using motion::PartialTrajectory;

PartialTrajectory full_trajectory(int T, std::uint64_t seed) {
  CounterRng rng(seed);
  PartialTrajectory traj(T);
  for (int t = 0; t < T; ++t)
    for (Group g : kAllGroups) traj.set(t, g, {rng.uniform(-1, 1), rng.uniform(0, 2), rng.uniform(-1, 1)});
  return traj;
}

vq::VqvaeConfig codec_config(bool split = true) {
  vq::VqvaeConfig c;
  c.codebook_size = 8;
  c.code_dim = 4;
  c.encoder_width = 8;
  c.decoder_width = 12;
  c.split = split;
  c.epochs = 2;
  c.batch_size = 4;
  return c;
}

MttConfig small_config() {
  MttConfig c;
  c.stage1_width = 16;
  c.stage1_layers = 2;
  c.stage2_width = 8;
  c.stage2_layers = 1;
  c.heads = 2;
  c.max_length = 16;
  c.epochs = 3;
  c.batch_size = 4;
  return c;
}

TEST(Masking, ContinuousMaskIsExact) {
  for (int T : {8, 64, 196}) {
    const PartialTrajectory full = full_trajectory(T, T);
    for (double p : {0.0, 0.1, 0.25, 0.3, 0.5, 0.75, 0.9, 1.0}) {
      CounterRng rng = CounterRng::stream(1, {static_cast<std::uint64_t>(T), static_cast<std::uint64_t>(p * 100)});
      const PartialTrajectory masked = continuous_trajectory_mask(full, p, rng);
      const int expected = static_cast<int>(std::floor(p * T + 1e-9));
      for (Group g : kAllGroups) {
        EXPECT_EQ(T - masked.count_specified(g), expected) << "T=" << T << " p=" << p;
        for (int t = 0; t < T; ++t)
          if (masked.specified(t, g)) EXPECT_EQ(masked.waypoint(t, g), full.waypoint(t, g));
      }
    }
  }
}

TEST(Masking, ContinuousMaskKeepsExistingHoles) {
  PartialTrajectory traj = full_trajectory(20, 3);
  for (int t = 0; t < 6; ++t) traj.clear(t, Group::root);
  CounterRng rng(4);
  const PartialTrajectory masked = continuous_trajectory_mask(traj, 0.5, rng);
  for (int t = 0; t < 6; ++t) EXPECT_FALSE(masked.specified(t, Group::root));
  EXPECT_EQ(masked.count_specified(Group::root), 10);
  CounterRng rng2(4);
  EXPECT_EQ(continuous_trajectory_mask(traj, 0.2, rng2).count_specified(Group::root), 14);
  EXPECT_THROW(continuous_trajectory_mask(traj, 1.5, rng2), InputError);
}

TEST(Masking, ContinuousMaskUsesContiguousRuns) {
  // Runs of up to T/4 frames give far fewer holes than an independent mask (about 12 here).
  const PartialTrajectory full = full_trajectory(64, 5);
  double runs = 0.0;
  int cases = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    CounterRng rng(s);
    const PartialTrajectory masked = continuous_trajectory_mask(full, 0.25, rng);
    for (Group g : kAllGroups) {
      for (int t = 0; t < 64; ++t)
        if (!masked.specified(t, g) && (t == 0 || masked.specified(t - 1, g))) runs += 1.0;
      ++cases;
    }
  }
  EXPECT_LT(runs / cases, 4.0);
}

TEST(Masking, JointLevelMaskDrawsDistinctGroups) {
  const PartialTrajectory full = full_trajectory(8, 6);
  std::vector<int> histogram(7, 0);
  for (std::uint64_t s = 0; s < 7000; ++s) {
    CounterRng rng(s);
    std::vector<Group> drawn;
    const PartialTrajectory masked = joint_level_mask(full, rng, &drawn);
    const std::set<Group> unique(drawn.begin(), drawn.end());
    ASSERT_EQ(unique.size(), drawn.size());
    ++histogram[drawn.size()];
    for (Group g : kAllGroups)
      EXPECT_EQ(masked.count_specified(g), unique.count(g) ? 0 : 8);
  }
  for (int k = 0; k <= 6; ++k) EXPECT_NEAR(histogram[k] / 7000.0, 1.0 / 7.0, 0.02) << k;
}

TEST(Schedules, LinearEndpoints) {
  const MttConfig c;
  EXPECT_DOUBLE_EQ(mask_proportion_at(c, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(mask_proportion_at(c, 0.5), 0.375);
  EXPECT_DOUBLE_EQ(mask_proportion_at(c, 1.0), 0.75);
  EXPECT_DOUBLE_EQ(temperature_at(c, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(temperature_at(c, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(temperature_at(c, 0.5), 0.75);
}

TEST(Model, TokenCountAndLogitShape) {
  const Mtt model(small_config(), codec_config(), 1);
  EXPECT_EQ(model.token_count(8), 13);
  EXPECT_EQ(model.token_count(16), 25);
  EXPECT_THROW(model.token_count(10), ShapeError);
  nn::Graph g;
  EXPECT_EQ(model.tokens(g, full_trajectory(16, 1), "a person walks").rows(), 25);
  const CodeLogits logits = model.predict(full_trajectory(16, 1), "a person walks");
  ASSERT_EQ(logits.blocks.size(), 6u);
  for (const Mat& b : logits.blocks) {
    EXPECT_EQ(b.rows(), 4);
    EXPECT_EQ(b.cols(), 8);
  }
  EXPECT_THROW(model.predict(full_trajectory(20, 1), ""), ShapeError);
}

TEST(Model, UnsplitVariantHasOneBlock) {
  const Mtt model(small_config(), codec_config(false), 1);
  const CodeLogits logits = model.predict(full_trajectory(8, 1), "someone waves");
  ASSERT_EQ(logits.blocks.size(), 1u);
  EXPECT_EQ(logits.blocks[0].rows(), 2);
  EXPECT_EQ(logits.blocks[0].cols(), 8);
}

TEST(Model, FullyMaskedTrajectoryDependsOnTextOnly) {
  const Mtt model(small_config(), codec_config(), 2);
  PartialTrajectory a(8), b(8);
  b.set(0, Group::root, {1, 1, 1});
  b.clear(0, Group::root);
  const CodeLogits la = model.predict(a, "a man squats down");
  const CodeLogits lb = model.predict(b, "a man squats down");
  for (int k = 0; k < 6; ++k) EXPECT_EQ(la.blocks[k], lb.blocks[k]);
  const CodeLogits lc = model.predict(a, "a man waves");
  EXPECT_GT((la.blocks[0] - lc.blocks[0]).norm(), 1e-9);
  const CodeLogits ld = model.predict(full_trajectory(8, 2), "a man squats down");
  EXPECT_GT((la.blocks[0] - ld.blocks[0]).norm(), 1e-9);
}

TEST(Model, MismatchedDownsamplingIsRejected) {
  MttConfig c = small_config();
  c.waypoints_per_token = 2;
  EXPECT_THROW(Mtt(c, codec_config(), 1), ConfigError);
  c = small_config();
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
}

std::vector<vq::Codebook> books(int blocks, int size, int dim) {
  std::vector<vq::Codebook> out;
  for (int b = 0; b < blocks; ++b) {
    Mat codes(size, dim);
    for (int i = 0; i < size; ++i) codes.row(i).setConstant(10.0 * b + i);
    out.emplace_back(codes);
  }
  return out;
}

TEST(Sampling, DominantLogitIsChosen) {
  CodeLogits logits;
  logits.blocks.push_back(Mat::Zero(1, 5));
  logits.blocks[0](0, 3) = 50.0;
  const auto cb = books(1, 5, 2);
  CounterRng rng(8);
  int hits = 0;
  for (int i = 0; i < 1000; ++i) hits += sample_codes(logits, 1.0, rng, cb).indices(0, 0) == 3;
  EXPECT_GE(hits, 999);
}

TEST(Sampling, FrequenciesMatchSoftmax) {
  CodeLogits logits;
  Mat row(1, 4);
  row << 0.5, -1.0, 1.2, 0.0;
  logits.blocks.push_back(row);
  const auto cb = books(1, 4, 1);
  const Eigen::ArrayXd p = row.row(0).array().exp() / row.row(0).array().exp().sum();
  CounterRng rng(9);
  Eigen::ArrayXd freq = Eigen::ArrayXd::Zero(4);
  const int n = 10000;
  for (int i = 0; i < n; ++i) freq(sample_codes(logits, 0.5, rng, cb).indices(0, 0)) += 1.0 / n;
  EXPECT_LT(0.5 * (freq - p).abs().sum(), 0.02);
}

TEST(Sampling, NoiseFreeIsArgmaxAndLatentIsLookup) {
  CodeLogits logits;
  for (int b = 0; b < 2; ++b) {
    Mat m = Mat::Zero(3, 4);
    for (int t = 0; t < 3; ++t) m(t, (t + b) % 4) = 1.0;
    logits.blocks.push_back(m);
  }
  const auto cb = books(2, 4, 3);
  CounterRng rng(1);
  const SampledCodes s = sample_codes(logits, 1e-3, rng, cb, false);
  EXPECT_EQ(rng.counter(), 0u);
  for (int t = 0; t < 3; ++t)
    for (int b = 0; b < 2; ++b) {
      EXPECT_EQ(s.indices(t, b), (t + b) % 4);
      EXPECT_EQ(s.one_hot[b].row(t).sum(), 1.0);
      EXPECT_EQ(s.latent.values.block(t, 3 * b, 1, 3), cb[b].codes.row((t + b) % 4));
    }
  EXPECT_THROW(sample_codes(logits, 1.0, rng, books(1, 4, 3)), ShapeError);
  EXPECT_THROW(sample_codes(logits, 0.0, rng, cb), InputError);
}

TEST(Sampling, StraightThroughCarriesSoftmaxGradient) {
  nn::Graph g;
  Mat l(2, 3);
  l << 0.1, 0.4, -0.2, 1.0, 0.0, 0.3;
  nn::Var logits = g.input(l);
  CounterRng rng(2);
  nn::Var onehot = gumbel_straight_through(logits, 0.7, rng);
  for (int r = 0; r < 2; ++r) EXPECT_DOUBLE_EQ(onehot.value().row(r).sum(), 1.0);
  Mat w(2, 3);
  w << 1, 2, 3, -1, 0, 4;
  g.backward(nn::sum(nn::mul(onehot, g.constant(w))));
  EXPECT_GT(logits.grad().norm(), 1e-6);
  for (int r = 0; r < 2; ++r) EXPECT_NEAR(logits.grad().row(r).sum(), 0.0, 1e-12);
}

data::Corpus tiny_corpus() {
  data::GeneratorConfig cfg;
  cfg.min_length = 16;
  cfg.max_length = 16;
  return data::generate_corpus(cfg, 8, 3);
}

TEST(Training, LossDecreasesAndSaveLoadRoundTrips) {
  const data::Corpus corpus = tiny_corpus();
  vq::VqvaeConfig vc = codec_config();
  vc.epochs = 3;
  const vq::TrainedCodec codec = vq::train_vqvae(corpus, vc, 1, motion::SkeletonSpec::humanoid22());
  MttConfig mc = small_config();
  mc.epochs = 8;
  mc.learning_rate = 3e-3;
  Mtt model(mc, vc, 1);
  const MttTrainReport report = train_mtt(model, codec.codec, corpus, 1);
  ASSERT_EQ(report.loss.size(), 8u);
  EXPECT_LT(report.cross_entropy.back(), report.cross_entropy.front());

  nn::Container c;
  model.save(c);
  const auto dir = std::filesystem::temp_directory_path() / "tlc_mtt_roundtrip";
  c.save(dir);
  const Mtt loaded = Mtt::load(nn::Container::load(dir), vc);
  const PartialTrajectory traj = corpus.samples[0].full_trajectories;
  EXPECT_EQ(loaded.predict(traj, "a person walks").blocks[2], model.predict(traj, "a person walks").blocks[2]);
  std::filesystem::remove_all(dir);
}

TEST(Training, IsDeterministic) {
  const data::Corpus corpus = tiny_corpus();
  vq::VqvaeConfig vc = codec_config();
  const vq::TrainedCodec codec = vq::train_vqvae(corpus, vc, 1, motion::SkeletonSpec::humanoid22());
  MttConfig mc = small_config();
  mc.epochs = 2;
  Mtt a(mc, vc, 5), b(mc, vc, 5);
  EXPECT_EQ(train_mtt(a, codec.codec, corpus, 7).loss, train_mtt(b, codec.codec, corpus, 7).loss);
}

}  // namespace
}  // namespace tlc::mtt
