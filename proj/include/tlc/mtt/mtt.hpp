// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tlc/common/rng.hpp"
#include "tlc/data/corpus.hpp"
#include "tlc/motion/trajectory.hpp"
#include "tlc/nn/container.hpp"
#include "tlc/nn/layers.hpp"
#include "tlc/text/encoder.hpp"
#include "tlc/vq/codec.hpp"

namespace tlc::mtt {

struct MttConfig {
  int stage1_width = 64;
  int stage1_layers = 4;
  int stage2_width = 48;
  int stage2_layers = 3;
  int heads = 4;
  int ff_multiplier = 2;
  int waypoints_per_token = 4;  // must equal the codec's downsampling factor
  int max_length = 64;          // longest trajectory (frames) the positional table covers

  double temperature_start = 1.0;
  double temperature_end = 0.5;
  double max_mask_proportion = 0.75;
  double continuous_probability = 0.5;

  int epochs = 60;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double final_learning_rate = 1e-4;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  double reconstruction_weight = 1.0;

  void validate() const;
  nlohmann::json to_json() const;
  static MttConfig from_json(const nlohmann::json& j);
};

/// Linear curriculum of the continuous-mask proportion (0 at the start of training).
double mask_proportion_at(const MttConfig& config, double progress);
/// Linear Gumbel temperature schedule.
double temperature_at(const MttConfig& config, double progress);

/// Per group, masks random contiguous runs of still-specified frames until
/// floor(p * T) frames of that group are masked. Never unmasks.
motion::PartialTrajectory continuous_trajectory_mask(const motion::PartialTrajectory& traj,
                                                     double proportion, CounterRng& rng);
/// Draws k uniform in {0..6} and masks k distinct groups entirely. The drawn
/// groups are reported through `drawn` when given.
motion::PartialTrajectory joint_level_mask(const motion::PartialTrajectory& traj, CounterRng& rng,
                                           std::vector<motion::Group>* drawn = nullptr);

/// Logits over code indices, one L x |C| matrix per codec block.
struct CodeLogits {
  std::vector<Mat> blocks;
  int length() const { return blocks.empty() ? 0 : static_cast<int>(blocks[0].rows()); }
};

class Mtt {
 public:
  Mtt(const MttConfig& config, const vq::VqvaeConfig& codec_config, std::uint64_t seed);

  const MttConfig& config() const noexcept { return config_; }
  nn::ParamStore& params() noexcept { return params_; }
  const nn::ParamStore& params() const noexcept { return params_; }
  const text::TextEncoder& text_encoder() const noexcept { return text_; }

  /// Number of tokens for a T-frame trajectory: 1 + 6 T / s.
  int token_count(int frames) const;
  /// Token matrix fed to the first transformer stage.
  nn::Var tokens(nn::Graph& g, const motion::PartialTrajectory& traj, std::string_view text) const;
  std::vector<nn::Var> logits(nn::Graph& g, const motion::PartialTrajectory& traj,
                              std::string_view text) const;
  CodeLogits predict(const motion::PartialTrajectory& traj, std::string_view text) const;

  void save(nn::Container& c, const std::string& prefix = "mtt.") const;
  static Mtt load(const nn::Container& c, const vq::VqvaeConfig& codec_config,
                  const std::string& prefix = "mtt.");

 private:
  MttConfig config_;
  int blocks_ = 6;
  int codebook_size_ = 0;
  nn::ParamStore params_;
  text::TextEncoder text_;
  nn::Linear language_;
  nn::Linear waypoint_;
  nn::ParamId group_embedding_ = -1;     // 6 x w1
  nn::ParamId position_embedding_ = -1;  // (max_length / s) x w1
  nn::ParamId mask_embedding_ = -1;      // 1 x w1
  std::vector<nn::TransformerLayer> stage1_;
  nn::Linear bridge_;
  std::vector<nn::TransformerLayer> stage2_;
  nn::LayerNorm final_norm_;
  std::vector<nn::Linear> heads_;
};

struct SampledCodes {
  vq::IndexMat indices;         // L x blocks
  std::vector<Mat> one_hot;     // per block, L x |C|
  vq::LatentSequence latent;    // concatenated selected codes
};

/// Hard Gumbel-max sample per (step, block). With `add_noise` false this is
/// the argmax of the logits. Draw order: step, then block, then code.
SampledCodes sample_codes(const CodeLogits& logits, double temperature, CounterRng& rng,
                          const std::vector<vq::Codebook>& codebooks, bool add_noise = true);

/// Straight-through Gumbel-softmax selection: forward value is the one-hot
/// argmax, gradients flow through softmax((logits + noise) / temperature).
nn::Var gumbel_straight_through(nn::Var logits, double temperature, CounterRng& rng);

struct MttTrainReport {
  std::vector<double> loss;
  std::vector<double> cross_entropy;
  std::vector<double> reconstruction;
  int steps = 0;
};

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Trains `model` against a frozen codec on the corpus training split.
MttTrainReport train_mtt(Mtt& model, const vq::Codec& codec, const data::Corpus& corpus,
                         std::uint64_t seed, const EpochCallback& on_epoch = {});

}  // namespace tlc::mtt
