// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <limits>

#include <gtest/gtest.h>

#include "tlc/common/error.hpp"
#include "tlc/common/rng.hpp"
#include "tlc/nn/ops.hpp"
#include "tlc/text/encoder.hpp"
#include "tlc/vq/codec.hpp"

namespace tlc::vq {
namespace {

Mat random(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double scale = 1.0) {
  CounterRng rng(seed);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
  return m;
}

VqvaeConfig small_config(bool split = true) {
  VqvaeConfig c;
  c.codebook_size = 8;
  c.code_dim = 4;
  c.encoder_width = 8;
  c.decoder_width = 12;
  c.split = split;
  c.epochs = 4;
  c.batch_size = 4;
  c.warmup_steps = 2;
  return c;
}

const motion::SkeletonSpec& skeleton() {
  static const motion::SkeletonSpec s = motion::SkeletonSpec::humanoid22();
  return s;
}

int brute_force_nearest(const Mat& codes, const RowVec& x) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < codes.rows(); ++i) {
    double d = 0.0;
    for (Eigen::Index c = 0; c < codes.cols(); ++c) d += (codes(i, c) - x(c)) * (codes(i, c) - x(c));
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

TEST(Quantizer, FixtureCases) {
  Mat codes(2, 2);
  codes << 0, 0, 1, 1;
  Codebook cb(codes);
  Mat x(2, 2);
  x << 0.9, 1.2, 0.5, 0.5;
  const auto idx = cb.nearest(x);
  EXPECT_EQ(idx[0], 1);
  EXPECT_EQ(idx[1], 0);  // equidistant: lowest index
}

TEST(Quantizer, MatchesBruteForceOracle) {
  for (int trial = 0; trial < 200; ++trial) {
    CounterRng rng = CounterRng::stream(5, {static_cast<std::uint64_t>(trial)});
    const int size = 1 + static_cast<int>(rng.below(16));
    const int dim = 1 + static_cast<int>(rng.below(6));
    // Small integer grids make exact ties frequent.
    Mat codes(size, dim);
    for (Eigen::Index i = 0; i < codes.size(); ++i) codes.data()[i] = static_cast<double>(rng.between(-2, 2));
    Mat x(5, dim);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = static_cast<double>(rng.between(-4, 4)) / 2.0;
    const auto idx = Codebook(codes).nearest(x);
    for (Eigen::Index r = 0; r < x.rows(); ++r) EXPECT_EQ(idx[r], brute_force_nearest(codes, x.row(r)));
  }
}

TEST(Quantizer, EmptyCodebookAndWidthErrors) {
  EXPECT_THROW(Codebook(Mat(0, 3)).nearest(Mat::Zero(1, 3)), ConfigError);
  EXPECT_THROW(Codebook(Mat::Zero(2, 3)).nearest(Mat::Zero(1, 2)), ShapeError);
  LatentSequence z{Mat::Zero(2, 4), false};
  EXPECT_THROW(quantize_nearest(z, {}), ConfigError);
  EXPECT_THROW(quantize_nearest(z, {Codebook(Mat::Zero(2, 3))}), ShapeError);
}

TEST(Quantizer, QuantizeNearestPerBlock) {
  std::vector<Codebook> books = {Codebook(random(4, 2, 1)), Codebook(random(3, 3, 2))};
  LatentSequence z{random(6, 5, 3), false};
  const Quantized q = quantize_nearest(z, books);
  ASSERT_EQ(q.indices.rows(), 6);
  ASSERT_EQ(q.indices.cols(), 2);
  EXPECT_TRUE(q.latent.quantized);
  for (int t = 0; t < 6; ++t) {
    EXPECT_EQ(q.indices(t, 0), brute_force_nearest(books[0].codes, z.values.block(t, 0, 1, 2)));
    EXPECT_EQ(q.indices(t, 1), brute_force_nearest(books[1].codes, z.values.block(t, 2, 1, 3)));
    EXPECT_EQ(q.latent.values.block(t, 0, 1, 2), books[0].codes.row(q.indices(t, 0)));
    EXPECT_EQ(q.latent.values.block(t, 2, 1, 3), books[1].codes.row(q.indices(t, 1)));
  }
}

TEST(Codebook, EmaConvergesToAssignmentMean) {
  Mat codes(2, 2);
  codes << 0, 0, 10, 10;
  Codebook cb(codes);
  Mat x(4, 2);
  x << 1, 2, 3, 2, 8, 9, 10, 11;
  const std::vector<int> assign = {0, 0, 1, 1};
  Mat target(2, 2);
  target << 2, 2, 9, 10;
  double previous = (cb.codes - target).norm();
  for (int step = 0; step < 2000; ++step) {
    cb.ema_update(x, assign, 0.99);
    const double err = (cb.codes - target).norm();
    EXPECT_LE(err, previous + 1e-12);
    previous = err;
  }
  EXPECT_LT(previous, 1e-6);
}

TEST(Codebook, ResetReplacesOnlyDeadCodes) {
  Mat codes(3, 2);
  codes << 0, 0, 1, 1, 2, 2;
  Codebook cb(codes);
  cb.ema_count << 5.0, 0.1, 5.0;
  const Mat x = random(4, 2, 7) + Mat::Constant(4, 2, 100.0);
  CounterRng rng(3);
  EXPECT_EQ(cb.reset_dead(x, 1.0, rng), 1);
  EXPECT_EQ(cb.codes.row(0), codes.row(0));
  EXPECT_EQ(cb.codes.row(2), codes.row(2));
  EXPECT_GT(cb.codes(1, 0), 90.0);
}

TEST(Codec, LatentLength) {
  Codec codec(small_config(), skeleton(), 1);
  EXPECT_EQ(codec.latent_length(8), 2);
  EXPECT_EQ(codec.latent_length(196), 49);
  EXPECT_THROW(codec.latent_length(10), ShapeError);
  const int M = codec.layout().feature_dim();
  const LatentSequence z = codec.encode(random(196, M, 2));
  EXPECT_EQ(z.length(), 49);
  EXPECT_EQ(z.values.cols(), 24);
  EXPECT_EQ(codec.decode(z.values).rows(), 196);
  EXPECT_EQ(codec.decode(z.values).cols(), M);
}

TEST(Codec, DecodeWidthMismatch) {
  Codec codec(small_config(), skeleton(), 1);
  EXPECT_THROW(codec.decode(Mat::Zero(2, 23)), ShapeError);
}

TEST(Codec, EncoderOutputsAreUnitRows) {
  Codec codec(small_config(), skeleton(), 1);
  const LatentSequence z = codec.encode(random(16, codec.layout().feature_dim(), 4));
  for (int b = 0; b < 6; ++b)
    for (int t = 0; t < z.length(); ++t) EXPECT_NEAR(z.values.block(t, 4 * b, 1, 4).norm(), 1.0, 1e-9);
}

TEST(Codec, SplitEncodersAreGroupIndependent) {
  Codec codec(small_config(), skeleton(), 3);
  const Mat x = random(16, codec.layout().feature_dim(), 5);
  const LatentSequence base = codec.encode(x);
  for (int k = 0; k < 6; ++k) {
    Mat y = x;
    for (int ch : codec.partition().channels(k)) y.col(ch).array() += 0.7;
    const LatentSequence moved = codec.encode(y);
    for (int b = 0; b < 6; ++b) {
      const double diff = (moved.values.middleCols(4 * b, 4) - base.values.middleCols(4 * b, 4)).norm();
      if (b == k)
        EXPECT_GT(diff, 1e-6) << "block " << k;
      else
        EXPECT_EQ(diff, 0.0) << "block " << k << " leaked into " << b;
    }
  }
}

TEST(Codec, UnsplitEncoderMixesGroups) {
  Codec codec(small_config(false), skeleton(), 3);
  ASSERT_EQ(codec.partition().num_blocks(), 1);
  const Mat x = random(16, codec.layout().feature_dim(), 5);
  const LatentSequence base = codec.encode(x);
  const motion::GroupPartition groups = motion::GroupPartition::by_groups(skeleton(), codec.layout());
  Mat y = x;
  for (int ch : groups.channels(0)) y.col(ch).array() += 0.7;
  const LatentSequence moved = codec.encode(y);
  for (int b = 1; b < 6; ++b)
    EXPECT_GT((moved.values.middleCols(4 * b, 4) - base.values.middleCols(4 * b, 4)).norm(), 1e-6);
}

TEST(Codec, DecodeGradientMatchesFiniteDifferences) {
  Codec codec(small_config(), skeleton(), 9);
  const Mat z = random(3, 24, 10, 0.5);
  const Mat w = random(12, codec.layout().feature_dim(), 11);
  auto objective = [&](nn::Graph& g, nn::Var v) { return nn::sum(nn::mul(codec.decode(g, v), g.constant(w))); };
  nn::Graph g;
  nn::Var in = g.input(z);
  g.backward(objective(g, in));
  const Mat analytic = in.grad();
  const double h = 1e-4;
  for (Eigen::Index i = 0; i < z.size(); i += 3) {
    Mat zp = z, zm = z;
    zp.data()[i] += h;
    zm.data()[i] -= h;
    nn::Graph gp, gm;
    const double numeric =
        (objective(gp, gp.input(zp)).scalar() - objective(gm, gm.input(zm)).scalar()) / (2 * h);
    EXPECT_NEAR(analytic.data()[i], numeric, 1e-4 * std::max(1.0, std::abs(numeric)));
  }
}

TEST(Codec, LookupMatchesQuantize) {
  Codec codec(small_config(), skeleton(), 2);
  const Quantized q = codec.quantize(codec.encode(random(8, codec.layout().feature_dim(), 1)));
  EXPECT_EQ(codec.lookup(q.indices).values, q.latent.values);
  IndexMat bad = q.indices;
  bad(0, 0) = 99;
  EXPECT_THROW(codec.lookup(bad), InputError);
}

std::vector<Mat> training_clips(const Codec& codec, int n, int frames) {
  std::vector<Mat> clips;
  for (int i = 0; i < n; ++i) clips.push_back(random(frames, codec.layout().feature_dim(), 100 + i, 0.5));
  return clips;
}

TEST(Codec, TrainingReducesLoss) {
  VqvaeConfig cfg = small_config();
  cfg.epochs = 6;
  Codec codec(cfg, skeleton(), 4);
  const auto report = train_codec(codec, training_clips(codec, 8, 8), 4);
  ASSERT_EQ(report.loss.size(), 6u);
  EXPECT_LT(report.reconstruction.back(), report.reconstruction.front());
  EXPECT_EQ(report.steps, 12);
}

TEST(Codec, TrainingIsDeterministic) {
  Codec a(small_config(), skeleton(), 4), b(small_config(), skeleton(), 4);
  const auto clips = training_clips(a, 6, 8);
  const auto ra = train_codec(a, clips, 11);
  const auto rb = train_codec(b, clips, 11);
  EXPECT_EQ(ra.loss, rb.loss);
  EXPECT_EQ(a.decode(Mat::Ones(2, 24)), b.decode(Mat::Ones(2, 24)));
}

TEST(Codec, NonFiniteLossRaisesTrainingError) {
  VqvaeConfig cfg = small_config();
  cfg.learning_rate = std::numeric_limits<double>::infinity();
  cfg.clip_norm = 0.0;
  Codec codec(cfg, skeleton(), 4);
  try {
    train_codec(codec, training_clips(codec, 8, 8), 4);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_GE(e.epoch(), 0);
  }
  for (const auto& p : codec.params().all()) EXPECT_TRUE(p.value.allFinite()) << p.name;
}

TEST(Codec, SaveLoadRoundTrip) {
  Codec codec(small_config(), skeleton(), 4);
  train_codec(codec, training_clips(codec, 4, 8), 2);
  nn::Container c;
  codec.save(c);
  const auto dir = std::filesystem::temp_directory_path() / "tlc_vq_roundtrip";
  c.save(dir);
  const Codec loaded = Codec::load(nn::Container::load(dir));
  const Mat x = random(8, codec.layout().feature_dim(), 3);
  EXPECT_EQ(loaded.reconstruct(x), codec.reconstruct(x));
  EXPECT_EQ(loaded.config().to_json(), codec.config().to_json());
  std::filesystem::remove_all(dir);
}

TEST(VqvaeConfig, JsonRoundTripAndValidation) {
  VqvaeConfig c = small_config(false);
  c.activation = nn::Activation::relu;
  EXPECT_EQ(VqvaeConfig::from_json(c.to_json()).to_json(), c.to_json());
  VqvaeConfig bad;
  bad.downsample = 3;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW(VqvaeConfig::from_json({{"activation", "tanh"}}), ConfigError);
}

}  // namespace
}  // namespace tlc::vq

namespace tlc::text {
namespace {

TEST(Text, Tokenize) {
  EXPECT_EQ(tokenize("A person Walks, quickly!"), (std::vector<std::string>{"a", "person", "walks", "quickly"}));
  EXPECT_TRUE(tokenize("  ...  ").empty());
}

TEST(Text, BucketVectorIsUnitNorm) {
  const auto v = bucket_vector("a person walks a person");
  double sq = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    sq += v[i].second * v[i].second;
    if (i > 0) EXPECT_LT(v[i - 1].first, v[i].first);
  }
  EXPECT_NEAR(sq, 1.0, 1e-12);
  EXPECT_TRUE(bucket_vector("").empty());
}

TEST(Text, EncoderEmbedding) {
  nn::ParamStore store;
  CounterRng rng(1);
  const TextEncoder enc = TextEncoder::create(store, "text", rng, 256, 16);
  const RowVec a = enc.embed(store, "someone waves");
  EXPECT_EQ(a, enc.embed(store, "Someone waves."));
  EXPECT_GT((a - enc.embed(store, "someone squats")).norm(), 1e-6);
  EXPECT_EQ(enc.embed(store, ""), store.value(enc.bias));
  nn::Graph g;
  EXPECT_EQ(RowVec(enc(g, store, "someone waves").value()), a);
}

}  // namespace
}  // namespace tlc::text
