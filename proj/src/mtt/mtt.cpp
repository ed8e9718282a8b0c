// SPDX-License-Identifier: Apache-2.0
#include "tlc/mtt/mtt.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "tlc/common/error.hpp"
#include "tlc/nn/adamw.hpp"
#include "tlc/nn/ops.hpp"

namespace tlc::mtt {

using motion::Group;
using motion::kAllGroups;
using motion::kNumGroups;
using motion::PartialTrajectory;
using nlohmann::json;
using nn::Var;

void MttConfig::validate() const {
  if (stage1_width < 1 || stage2_width < 1 || stage1_layers < 0 || stage2_layers < 0)
    throw ConfigError("transformer widths must be positive");
  if (heads < 1 || stage1_width % heads != 0 || stage2_width % heads != 0)
    throw ConfigError("heads must divide both stage widths");
  if (ff_multiplier < 1) throw ConfigError("ff_multiplier must be positive");
  if (waypoints_per_token < 1) throw ConfigError("waypoints_per_token must be positive");
  if (max_length < waypoints_per_token || max_length % waypoints_per_token != 0)
    throw ConfigError("max_length must be a multiple of waypoints_per_token");
  if (!(temperature_start > 0.0) || !(temperature_end > 0.0))
    throw ConfigError("temperatures must be positive");
  if (max_mask_proportion < 0.0 || max_mask_proportion > 1.0)
    throw ConfigError("max_mask_proportion must lie in [0, 1]");
  if (continuous_probability < 0.0 || continuous_probability > 1.0)
    throw ConfigError("continuous_probability must lie in [0, 1]");
  if (epochs < 0 || batch_size < 1) throw ConfigError("epochs/batch_size out of range");
  if (!(learning_rate > 0.0) || final_learning_rate < 0.0) throw ConfigError("bad learning rate");
  if (reconstruction_weight < 0.0) throw ConfigError("reconstruction_weight must be non-negative");
}

json MttConfig::to_json() const {
  return {{"stage1_width", stage1_width},
          {"stage1_layers", stage1_layers},
          {"stage2_width", stage2_width},
          {"stage2_layers", stage2_layers},
          {"heads", heads},
          {"ff_multiplier", ff_multiplier},
          {"waypoints_per_token", waypoints_per_token},
          {"max_length", max_length},
          {"temperature_start", temperature_start},
          {"temperature_end", temperature_end},
          {"max_mask_proportion", max_mask_proportion},
          {"continuous_probability", continuous_probability},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"final_learning_rate", final_learning_rate},
          {"weight_decay", weight_decay},
          {"clip_norm", clip_norm},
          {"reconstruction_weight", reconstruction_weight}};
}

MttConfig MttConfig::from_json(const json& j) {
  MttConfig c;
  c.stage1_width = j.value("stage1_width", c.stage1_width);
  c.stage1_layers = j.value("stage1_layers", c.stage1_layers);
  c.stage2_width = j.value("stage2_width", c.stage2_width);
  c.stage2_layers = j.value("stage2_layers", c.stage2_layers);
  c.heads = j.value("heads", c.heads);
  c.ff_multiplier = j.value("ff_multiplier", c.ff_multiplier);
  c.waypoints_per_token = j.value("waypoints_per_token", c.waypoints_per_token);
  c.max_length = j.value("max_length", c.max_length);
  c.temperature_start = j.value("temperature_start", c.temperature_start);
  c.temperature_end = j.value("temperature_end", c.temperature_end);
  c.max_mask_proportion = j.value("max_mask_proportion", c.max_mask_proportion);
  c.continuous_probability = j.value("continuous_probability", c.continuous_probability);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.final_learning_rate = j.value("final_learning_rate", c.final_learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.reconstruction_weight = j.value("reconstruction_weight", c.reconstruction_weight);
  c.validate();
  return c;
}

double mask_proportion_at(const MttConfig& config, double progress) {
  return config.max_mask_proportion * std::clamp(progress, 0.0, 1.0);
}

double temperature_at(const MttConfig& config, double progress) {
  const double p = std::clamp(progress, 0.0, 1.0);
  return config.temperature_start + (config.temperature_end - config.temperature_start) * p;
}

PartialTrajectory continuous_trajectory_mask(const PartialTrajectory& traj, double proportion,
                                             CounterRng& rng) {
  if (!(proportion >= 0.0 && proportion <= 1.0))
    throw InputError("mask proportion must lie in [0, 1]");
  PartialTrajectory out = traj;
  const int T = traj.length();
  const int target = static_cast<int>(std::floor(proportion * T + 1e-9));
  const int max_segment = std::max(1, T / 4);
  std::vector<int> open;
  for (Group g : kAllGroups) {
    int masked = T - out.count_specified(g);
    while (masked < target) {
      open.clear();
      for (int t = 0; t < T; ++t)
        if (out.specified(t, g)) open.push_back(t);
      int t = open[rng.below(open.size())];
      int run = static_cast<int>(rng.between(1, max_segment));
      run = std::min(run, target - masked);
      for (; t < T && run > 0; ++t) {
        if (!out.specified(t, g)) continue;
        out.clear(t, g);
        ++masked;
        --run;
      }
    }
  }
  return out;
}

PartialTrajectory joint_level_mask(const PartialTrajectory& traj, CounterRng& rng,
                                   std::vector<Group>* drawn) {
  PartialTrajectory out = traj;
  const int k = static_cast<int>(rng.below(kNumGroups + 1));
  std::array<Group, kNumGroups> order = kAllGroups;
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(rng.below(kNumGroups - i));
    std::swap(order[i], order[j]);
    out.clear_group(order[i]);
  }
  if (drawn) drawn->assign(order.begin(), order.begin() + k);
  return out;
}

Mtt::Mtt(const MttConfig& config, const vq::VqvaeConfig& codec_config, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  codec_config.validate();
  if (config_.waypoints_per_token != codec_config.downsample)
    throw ConfigError("waypoints_per_token must equal the codec downsampling factor");
  blocks_ = codec_config.num_blocks();
  codebook_size_ = codec_config.codebook_size;
  CounterRng rng = CounterRng::stream(seed, {0x6d7474ULL});
  const int w1 = config_.stage1_width;
  const int w2 = config_.stage2_width;
  const int s = config_.waypoints_per_token;
  text_ = text::TextEncoder::create(params_, "text", rng);
  language_ = nn::Linear::create(params_, "language", text_.dim, w1, rng);
  waypoint_ = nn::Linear::create(params_, "waypoint", 4 * s, w1, rng);
  group_embedding_ = params_.add("group_embedding", nn::uniform_init(kNumGroups, w1, 1.0, rng) * 0.1);
  position_embedding_ =
      params_.add("position_embedding", nn::uniform_init(config_.max_length / s, w1, 1.0, rng) * 0.1);
  mask_embedding_ = params_.add("mask_embedding", nn::uniform_init(1, w1, 1.0, rng) * 0.1);
  for (int i = 0; i < config_.stage1_layers; ++i)
    stage1_.push_back(nn::TransformerLayer::create(params_, "stage1." + std::to_string(i), w1,
                                                   config_.heads, w1 * config_.ff_multiplier, rng));
  bridge_ = nn::Linear::create(params_, "bridge", w1, w2, rng);
  for (int i = 0; i < config_.stage2_layers; ++i)
    stage2_.push_back(nn::TransformerLayer::create(params_, "stage2." + std::to_string(i), w2,
                                                   config_.heads, w2 * config_.ff_multiplier, rng));
  final_norm_ = nn::LayerNorm::create(params_, "final_norm", w2);
  for (int b = 0; b < blocks_; ++b)
    heads_.push_back(nn::Linear::create(params_, "head." + std::to_string(b), w2, codebook_size_, rng));
}

int Mtt::token_count(int frames) const {
  const int s = config_.waypoints_per_token;
  if (frames < s || frames % s != 0)
    throw ShapeError("trajectory length " + std::to_string(frames) + " is not a multiple of " +
                     std::to_string(s));
  return 1 + kNumGroups * (frames / s);
}

Var Mtt::tokens(nn::Graph& g, const PartialTrajectory& traj, std::string_view text) const {
  const int s = config_.waypoints_per_token;
  const int n = token_count(traj.length()) - 1;
  const int L = n / kNumGroups;
  if (L > config_.max_length / s)
    throw ShapeError("trajectory longer than the model's max_length");
  Mat features = Mat::Zero(n, 4 * s);
  Mat masked = Mat::Zero(n, 1);
  Mat group_select = Mat::Zero(n, kNumGroups);
  Mat position_select = Mat::Zero(n, config_.max_length / s);
  for (Group grp : kAllGroups) {
    const int gi = motion::index(grp);
    for (int i = 0; i < L; ++i) {
      const int row = gi * L + i;
      group_select(row, gi) = 1.0;
      position_select(row, i) = 1.0;
      int missing = 0;
      for (int k = 0; k < s; ++k) {
        const int t = i * s + k;
        if (!traj.specified(t, grp)) {
          ++missing;
          continue;
        }
        const Eigen::Vector3d p = traj.waypoint(t, grp);
        features.block(row, 4 * k, 1, 3) = p.transpose();
        features(row, 4 * k + 3) = 1.0;
      }
      masked(row, 0) = static_cast<double>(missing) / s;
    }
  }
  Var body = waypoint_(g, params_, g.constant(std::move(features)));
  body = nn::add(body, nn::matmul(g.constant(std::move(group_select)), g.param(params_, group_embedding_)));
  body = nn::add(body,
                 nn::matmul(g.constant(std::move(position_select)), g.param(params_, position_embedding_)));
  body = nn::add(body, nn::matmul(g.constant(std::move(masked)), g.param(params_, mask_embedding_)));
  Var lang = language_(g, params_, text_(g, params_, text));
  const std::array<Var, 2> parts{lang, body};
  return nn::concat_rows(parts);
}

std::vector<Var> Mtt::logits(nn::Graph& g, const PartialTrajectory& traj, std::string_view text) const {
  Var h = tokens(g, traj, text);
  for (const auto& layer : stage1_) h = layer(g, params_, h);
  h = bridge_(g, params_, h);
  for (const auto& layer : stage2_) h = layer(g, params_, h);
  h = final_norm_(g, params_, h);
  const int L = (static_cast<int>(h.rows()) - 1) / kNumGroups;
  std::vector<Var> out;
  if (blocks_ == kNumGroups) {
    for (int b = 0; b < blocks_; ++b) out.push_back(heads_[b](g, params_, nn::slice_rows(h, 1 + b * L, L)));
  } else {
    Mat pool = Mat::Zero(L, 1 + kNumGroups * L);
    for (int i = 0; i < L; ++i)
      for (int gi = 0; gi < kNumGroups; ++gi) pool(i, 1 + gi * L + i) = 1.0 / kNumGroups;
    Var pooled = nn::matmul(g.constant(std::move(pool)), h);
    out.push_back(heads_[0](g, params_, pooled));
  }
  return out;
}

CodeLogits Mtt::predict(const PartialTrajectory& traj, std::string_view text) const {
  nn::Graph g;
  CodeLogits out;
  for (const Var& v : logits(g, traj, text)) out.blocks.push_back(v.value());
  return out;
}

void Mtt::save(nn::Container& c, const std::string& prefix) const {
  c.config[prefix + "config"] = config_.to_json();
  nn::append_params(c, params_, prefix);
}

Mtt Mtt::load(const nn::Container& c, const vq::VqvaeConfig& codec_config, const std::string& prefix) {
  if (!c.config.contains(prefix + "config")) throw LoadError("container holds no transformer");
  Mtt model(MttConfig::from_json(c.config.at(prefix + "config")), codec_config, 0);
  nn::assign_params(model.params_, c, prefix);
  return model;
}

SampledCodes sample_codes(const CodeLogits& logits, double temperature, CounterRng& rng,
                          const std::vector<vq::Codebook>& codebooks, bool add_noise) {
  if (!(temperature > 0.0)) throw InputError("temperature must be positive");
  const int B = static_cast<int>(logits.blocks.size());
  if (B == 0 || static_cast<int>(codebooks.size()) != B)
    throw ShapeError("logit blocks do not match the codebooks");
  const int L = logits.length();
  SampledCodes out;
  out.indices = vq::IndexMat::Zero(L, B);
  int width = 0;
  for (int b = 0; b < B; ++b) {
    if (logits.blocks[b].rows() != L || logits.blocks[b].cols() != codebooks[b].size())
      throw ShapeError("logit block shape does not match its codebook");
    out.one_hot.push_back(Mat::Zero(L, codebooks[b].size()));
    width += codebooks[b].dim();
  }
  out.latent.values = Mat(L, width);
  out.latent.quantized = true;
  for (int t = 0; t < L; ++t) {
    int offset = 0;
    for (int b = 0; b < B; ++b) {
      const auto row = logits.blocks[b].row(t);
      int best = 0;
      double best_value = -std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < row.size(); ++i) {
        const double v = (row(i) + (add_noise ? rng.gumbel() : 0.0)) / temperature;
        if (v > best_value) {
          best_value = v;
          best = static_cast<int>(i);
        }
      }
      out.indices(t, b) = best;
      out.one_hot[b](t, best) = 1.0;
      const int d = codebooks[b].dim();
      out.latent.values.block(t, offset, 1, d) = codebooks[b].codes.row(best);
      offset += d;
    }
  }
  return out;
}

Var gumbel_straight_through(Var logits, double temperature, CounterRng& rng) {
  nn::Graph& g = *logits.graph();
  Mat noise(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < noise.rows(); ++r)
    for (Eigen::Index c = 0; c < noise.cols(); ++c) noise(r, c) = rng.gumbel();
  Var soft = nn::softmax_rows(nn::scale(nn::add(logits, g.constant(noise)), 1.0 / temperature));
  Mat hard = Mat::Zero(noise.rows(), noise.cols());
  const Mat perturbed = logits.value() + noise;
  for (Eigen::Index r = 0; r < hard.rows(); ++r) {
    Eigen::Index best = 0;
    perturbed.row(r).maxCoeff(&best);
    hard(r, best) = 1.0;
  }
  return nn::straight_through(soft, std::move(hard));
}

namespace {

struct TrainItem {
  Mat features;  // normalized
  vq::IndexMat teacher;
  PartialTrajectory trajectory;
  const std::string* text = nullptr;
};

}  // namespace

MttTrainReport train_mtt(Mtt& model, const vq::Codec& codec, const data::Corpus& corpus,
                         std::uint64_t seed, const EpochCallback& on_epoch) {
  const MttConfig& cfg = model.config();
  std::vector<int> ids = corpus.train;
  if (ids.empty()) {
    ids.resize(corpus.samples.size());
    std::iota(ids.begin(), ids.end(), 0);
  }
  if (ids.empty()) throw InputError("no training samples");
  std::vector<TrainItem> items;
  for (int i : ids) {
    const data::CorpusSample& s = corpus.samples[i];
    TrainItem item;
    item.features = data::normalize(s.motion.features, codec.stats());
    item.teacher = codec.quantize(codec.encode(item.features)).indices;
    item.trajectory = s.full_trajectories;
    item.text = &s.text;
    items.push_back(std::move(item));
  }
  const int B = static_cast<int>(codec.codebooks().size());
  const int N = static_cast<int>(items.size());
  const int batches = (N + cfg.batch_size - 1) / cfg.batch_size;
  const int total_steps = std::max(1, cfg.epochs * batches);

  nn::ParamStore& params = model.params();
  nn::AdamW opt(params, nn::AdamWConfig{0.9, 0.99, 1e-8, cfg.weight_decay, cfg.clip_norm});
  nn::ParamStore good = params;
  MttTrainReport report;
  std::vector<int> order(N);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    CounterRng shuffle_rng = CounterRng::stream(seed, {3, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0, epoch_ce = 0.0, epoch_rec = 0.0;
    for (int batch = 0; batch < batches; ++batch) {
      const int begin = batch * cfg.batch_size;
      const int end = std::min(N, begin + cfg.batch_size);
      const double progress = static_cast<double>(report.steps) / total_steps;
      const double proportion = mask_proportion_at(cfg, progress);
      const double temperature = temperature_at(cfg, progress);
      nn::Gradients grads(params);
      for (int k = begin; k < end; ++k) {
        const TrainItem& item = items[order[k]];
        CounterRng rng = CounterRng::stream(
            seed, {4, static_cast<std::uint64_t>(report.steps), static_cast<std::uint64_t>(k)});
        const PartialTrajectory traj = rng.uniform() < cfg.continuous_probability
                                           ? continuous_trajectory_mask(item.trajectory, proportion, rng)
                                           : joint_level_mask(item.trajectory, rng);
        nn::Graph g(&params, &grads);
        const std::vector<Var> logits = model.logits(g, traj, *item.text);
        Var ce;
        std::vector<Var> selected;
        for (int b = 0; b < B; ++b) {
          std::vector<int> targets(item.teacher.rows());
          for (Eigen::Index t = 0; t < item.teacher.rows(); ++t) targets[t] = item.teacher(t, b);
          Var term = nn::cross_entropy(logits[b], targets);
          ce = ce.valid() ? nn::add(ce, term) : term;
          Var onehot = gumbel_straight_through(logits[b], temperature, rng);
          selected.push_back(nn::matmul(onehot, g.constant(codec.codebooks()[b].codes)));
        }
        ce = nn::scale(ce, 1.0 / B);
        Var rec = nn::mse(codec.decode(g, nn::concat_cols(selected)), item.features);
        Var loss = nn::add(ce, nn::scale(rec, cfg.reconstruction_weight));
        if (!std::isfinite(loss.scalar())) {
          params = good;
          throw TrainingError("non-finite transformer loss at epoch " + std::to_string(epoch), epoch);
        }
        epoch_loss += loss.scalar();
        epoch_ce += ce.scalar();
        epoch_rec += rec.scalar();
        g.backward(loss);
      }
      grads.scale(1.0 / (end - begin));
      opt.step(params, grads, nn::linear_schedule(cfg.learning_rate, cfg.final_learning_rate, progress));
      ++report.steps;
    }
    report.loss.push_back(epoch_loss / N);
    report.cross_entropy.push_back(epoch_ce / N);
    report.reconstruction.push_back(epoch_rec / N);
    bool finite = std::isfinite(report.loss.back());
    for (const auto& p : params.all()) finite = finite && p.value.allFinite();
    if (!finite) {
      params = good;
      throw TrainingError("non-finite transformer state after epoch " + std::to_string(epoch), epoch);
    }
    good = params;
    if (on_epoch) on_epoch(epoch, report.loss.back());
  }
  params.round_to_float();
  return report;
}

}  // namespace tlc::mtt
