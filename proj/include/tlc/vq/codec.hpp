// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tlc/common/rng.hpp"
#include "tlc/data/corpus.hpp"
#include "tlc/motion/features.hpp"
#include "tlc/nn/container.hpp"
#include "tlc/nn/graph.hpp"
#include "tlc/nn/layers.hpp"

namespace tlc::vq {

using IndexMat = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct VqvaeConfig {
  int codebook_size = 32;
  int code_dim = 32;    // per group; the unsplit variant uses one block of 6 * code_dim
  int downsample = 4;   // s; a power of two, one stride-2 stage per factor of two
  int encoder_width = 48;
  int decoder_width = 96;
  int res_blocks = 1;   // residual blocks per stage
  nn::Activation activation = nn::Activation::gelu;
  bool split = true;

  double beta = 1.0;
  double ema_decay = 0.99;
  double reset_threshold = 1.0;
  int warmup_steps = 100;

  int epochs = 200;
  int batch_size = 16;
  double learning_rate = 2e-3;
  double final_learning_rate = 2e-4;
  double weight_decay = 0.0;
  double clip_norm = 1.0;

  int num_blocks() const noexcept { return split ? motion::kNumGroups : 1; }
  int block_dim() const noexcept { return split ? code_dim : motion::kNumGroups * code_dim; }
  /// Per-step width of the concatenated latent; equal for both variants.
  int latent_width() const noexcept { return motion::kNumGroups * code_dim; }

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults.
  static VqvaeConfig from_json(const nlohmann::json& j);
};

struct Codebook {
  Mat codes;          // |C| x dim
  RowVec ema_count;   // per-code EMA usage
  Mat ema_sum;        // EMA of the summed assigned vectors

  Codebook() = default;
  explicit Codebook(Mat initial);
  int size() const noexcept { return static_cast<int>(codes.rows()); }
  int dim() const noexcept { return static_cast<int>(codes.cols()); }

  /// Index of the nearest code (Euclidean) for each row; ties go to the lowest index.
  std::vector<int> nearest(const Mat& x) const;
  /// count <- d count + (1-d) n, sum <- d sum + (1-d) s, code <- sum / count.
  void ema_update(const Mat& x, const std::vector<int>& assignment, double decay);
  /// Re-seeds codes with usage below `threshold` from random rows of `x`.
  int reset_dead(const Mat& x, double threshold, CounterRng& rng);
};

struct LatentSequence {
  Mat values;  // L x (6 d)
  bool quantized = false;
  int length() const noexcept { return static_cast<int>(values.rows()); }
};

struct Quantized {
  LatentSequence latent;
  IndexMat indices;  // L x num_blocks
};

/// Nearest-code quantization of every block of every step.
Quantized quantize_nearest(const LatentSequence& latent, const std::vector<Codebook>& codebooks);

/// Per-group encoders, per-group codebooks and a single full-body decoder
/// (or the single-block unsplit variant).
class Codec {
 public:
  Codec(const VqvaeConfig& config, const motion::SkeletonSpec& skeleton, std::uint64_t seed);

  const VqvaeConfig& config() const noexcept { return config_; }
  const motion::SkeletonSpec& skeleton() const noexcept { return skeleton_; }
  const motion::PoseFeatureLayout& layout() const noexcept { return layout_; }
  const motion::GroupPartition& partition() const noexcept { return partition_; }
  nn::ParamStore& params() noexcept { return params_; }
  const nn::ParamStore& params() const noexcept { return params_; }
  std::vector<Codebook>& codebooks() noexcept { return codebooks_; }
  const std::vector<Codebook>& codebooks() const noexcept { return codebooks_; }
  const data::NormStats& stats() const noexcept { return stats_; }
  void set_stats(data::NormStats stats);

  /// Latent steps for `frames` input frames; throws ShapeError unless divisible by s.
  int latent_length(int frames) const;

  /// Continuous, row-normalized latent of a normalized T x M clip.
  LatentSequence encode(const Mat& normalized) const;
  /// Encoder outputs per block as graph nodes (L x block_dim each).
  std::vector<nn::Var> encode_blocks(nn::Graph& g, const Mat& normalized) const;
  Quantized quantize(const LatentSequence& latent) const;
  /// Normalized T x M features of an L x 6d latent.
  Mat decode(const Mat& latent) const;
  nn::Var decode(nn::Graph& g, nn::Var latent) const;
  /// encode -> quantize -> decode.
  Mat reconstruct(const Mat& normalized) const;
  /// Code rows for the given indices, concatenated into an L x 6d latent.
  LatentSequence lookup(const IndexMat& indices) const;

  /// Stores config, weights, codebooks and normalization under `prefix`.
  void save(nn::Container& c, const std::string& prefix = "vq.") const;
  static Codec load(const nn::Container& c, const std::string& prefix = "vq.");

 private:
  struct Encoder {
    nn::Conv1d in;
    std::vector<nn::Conv1d> down;
    std::vector<std::vector<nn::ResBlock>> res;
    nn::Conv1d out;
  };
  struct Decoder {
    nn::Conv1d in;
    std::vector<std::vector<nn::ResBlock>> res;
    std::vector<nn::Conv1d> up;
    nn::Conv1d penultimate;
    nn::Conv1d out;
  };

  VqvaeConfig config_;
  motion::SkeletonSpec skeleton_;
  motion::PoseFeatureLayout layout_;
  motion::GroupPartition partition_;
  nn::ParamStore params_;
  std::vector<Encoder> encoders_;
  Decoder decoder_;
  std::vector<Codebook> codebooks_;
  data::NormStats stats_;
  int stages_ = 0;
};

/// Unsplit ablation codec: one whole-body encoder and codebook at the same latent width.
VqvaeConfig unsplit_config(VqvaeConfig config);

struct VqTrainReport {
  std::vector<double> loss;            // per epoch, Eq.-style total
  std::vector<double> reconstruction;  // per epoch
  std::vector<double> commitment;      // per epoch, summed over blocks
  int resets = 0;
  int steps = 0;
};

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Trains in place on normalized clips (each T x M with T divisible by s).
VqTrainReport train_codec(Codec& codec, const std::vector<Mat>& clips, std::uint64_t seed,
                          const EpochCallback& on_epoch = {});

struct TrainedCodec {
  Codec codec;
  VqTrainReport report;
};

/// Builds a codec with the corpus statistics and trains it on the training split.
TrainedCodec train_vqvae(const data::Corpus& corpus, const VqvaeConfig& config, std::uint64_t seed,
                         const motion::SkeletonSpec& skeleton = motion::SkeletonSpec::humanoid22(),
                         const EpochCallback& on_epoch = {});

/// Mean per-joint position error (meters) of encode-quantize-decode over the
/// true frames of the given samples.
double reconstruction_mpjpe(const Codec& codec, const std::vector<const data::CorpusSample*>& samples);

}  // namespace tlc::vq
