// SPDX-License-Identifier: Apache-2.0
#include "tlc/vq/codec.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tlc/common/error.hpp"
#include "tlc/nn/adamw.hpp"
#include "tlc/nn/ops.hpp"

namespace tlc::vq {

using nlohmann::json;
using nn::Var;

namespace {

std::string activation_name(nn::Activation a) { return a == nn::Activation::relu ? "relu" : "gelu"; }

nn::Activation activation_from(const std::string& s) {
  if (s == "relu") return nn::Activation::relu;
  if (s == "gelu") return nn::Activation::gelu;
  throw ConfigError("unknown activation '" + s + "'");
}

int log2_exact(int s) {
  int k = 0;
  while ((1 << k) < s) ++k;
  return k;
}

constexpr nn::ConvShape kSame3{3, 1, 1, 1};
constexpr nn::ConvShape kDown{4, 2, 1, 1};

}  // namespace

void VqvaeConfig::validate() const {
  if (codebook_size < 1) throw ConfigError("codebook_size must be positive");
  if (code_dim < 1) throw ConfigError("code_dim must be positive");
  if (downsample < 1 || (downsample & (downsample - 1)) != 0)
    throw ConfigError("downsample must be a power of two");
  if (encoder_width < 1 || decoder_width < 1 || res_blocks < 0)
    throw ConfigError("network widths must be positive");
  if (!(beta > 0.0)) throw ConfigError("beta must be positive");
  if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw ConfigError("ema_decay must lie in (0, 1)");
  if (reset_threshold < 0.0) throw ConfigError("reset_threshold must be non-negative");
  if (epochs < 0 || batch_size < 1) throw ConfigError("epochs/batch_size out of range");
  if (!(learning_rate > 0.0) || final_learning_rate < 0.0) throw ConfigError("bad learning rate");
}

json VqvaeConfig::to_json() const {
  return {{"codebook_size", codebook_size}, {"code_dim", code_dim},
          {"downsample", downsample},       {"encoder_width", encoder_width},
          {"decoder_width", decoder_width}, {"res_blocks", res_blocks},
          {"activation", activation_name(activation)},
          {"split", split},                 {"beta", beta},
          {"ema_decay", ema_decay},         {"reset_threshold", reset_threshold},
          {"warmup_steps", warmup_steps},   {"epochs", epochs},
          {"batch_size", batch_size},       {"learning_rate", learning_rate},
          {"final_learning_rate", final_learning_rate},
          {"weight_decay", weight_decay},   {"clip_norm", clip_norm}};
}

VqvaeConfig VqvaeConfig::from_json(const json& j) {
  VqvaeConfig c;
  c.codebook_size = j.value("codebook_size", c.codebook_size);
  c.code_dim = j.value("code_dim", c.code_dim);
  c.downsample = j.value("downsample", c.downsample);
  c.encoder_width = j.value("encoder_width", c.encoder_width);
  c.decoder_width = j.value("decoder_width", c.decoder_width);
  c.res_blocks = j.value("res_blocks", c.res_blocks);
  c.activation = activation_from(j.value("activation", activation_name(c.activation)));
  c.split = j.value("split", c.split);
  c.beta = j.value("beta", c.beta);
  c.ema_decay = j.value("ema_decay", c.ema_decay);
  c.reset_threshold = j.value("reset_threshold", c.reset_threshold);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.final_learning_rate = j.value("final_learning_rate", c.final_learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.validate();
  return c;
}

VqvaeConfig unsplit_config(VqvaeConfig config) {
  config.split = false;
  return config;
}

// ---------------------------------------------------------------------------
// Codebook

Codebook::Codebook(Mat initial)
    : codes(std::move(initial)), ema_count(RowVec::Ones(codes.rows())), ema_sum(codes) {}

std::vector<int> Codebook::nearest(const Mat& x) const {
  if (codes.rows() == 0) throw ConfigError("empty codebook");
  if (x.cols() != codes.cols()) throw ShapeError("code dimension does not match latent");
  std::vector<int> out(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < codes.rows(); ++i) {
      double d = 0.0;
      for (Eigen::Index c = 0; c < codes.cols(); ++c) {
        const double diff = codes(i, c) - x(r, c);
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(i);
      }
    }
    out[r] = best;
  }
  return out;
}

void Codebook::ema_update(const Mat& x, const std::vector<int>& assignment, double decay) {
  if (static_cast<Eigen::Index>(assignment.size()) != x.rows())
    throw ShapeError("assignment count does not match rows");
  RowVec n = RowVec::Zero(size());
  Mat s = Mat::Zero(size(), dim());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    n(assignment[r]) += 1.0;
    s.row(assignment[r]) += x.row(r);
  }
  ema_count = decay * ema_count + (1.0 - decay) * n;
  ema_sum = decay * ema_sum + (1.0 - decay) * s;
  for (int i = 0; i < size(); ++i)
    if (ema_count(i) > 1e-12) codes.row(i) = ema_sum.row(i) / ema_count(i);
}

int Codebook::reset_dead(const Mat& x, double threshold, CounterRng& rng) {
  int resets = 0;
  for (int i = 0; i < size(); ++i) {
    if (ema_count(i) >= threshold) continue;
    const auto r = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(x.rows())));
    codes.row(i) = x.row(r);
    ema_sum.row(i) = x.row(r);
    ema_count(i) = 1.0;
    ++resets;
  }
  return resets;
}

Quantized quantize_nearest(const LatentSequence& latent, const std::vector<Codebook>& codebooks) {
  if (codebooks.empty()) throw ConfigError("no codebooks");
  int width = 0;
  for (const Codebook& cb : codebooks) {
    if (cb.size() == 0) throw ConfigError("empty codebook");
    width += cb.dim();
  }
  if (latent.values.cols() != width) throw ShapeError("latent width does not match codebooks");
  Quantized q;
  q.latent.values.resize(latent.values.rows(), width);
  q.latent.quantized = true;
  q.indices.resize(latent.values.rows(), static_cast<Eigen::Index>(codebooks.size()));
  int offset = 0;
  for (std::size_t b = 0; b < codebooks.size(); ++b) {
    const Codebook& cb = codebooks[b];
    const Mat slice = latent.values.middleCols(offset, cb.dim());
    const auto idx = cb.nearest(slice);
    for (Eigen::Index t = 0; t < slice.rows(); ++t) {
      q.indices(t, static_cast<Eigen::Index>(b)) = idx[t];
      q.latent.values.block(t, offset, 1, cb.dim()) = cb.codes.row(idx[t]);
    }
    offset += cb.dim();
  }
  return q;
}

// ---------------------------------------------------------------------------
// Codec

Codec::Codec(const VqvaeConfig& config, const motion::SkeletonSpec& skeleton, std::uint64_t seed)
    : config_(config),
      skeleton_(skeleton),
      layout_(motion::PoseFeatureLayout::for_skeleton(skeleton)) {
  config_.validate();
  skeleton_.validate();
  partition_ = config_.split ? motion::GroupPartition::by_groups(skeleton_, layout_)
                             : motion::GroupPartition::whole_body(layout_);
  stages_ = log2_exact(config_.downsample);
  CounterRng rng = CounterRng::stream(seed, {0x7671ULL});
  const nn::Activation act = config_.activation;
  const int E = config_.encoder_width;
  for (int b = 0; b < partition_.num_blocks(); ++b) {
    const std::string name = "enc." + std::to_string(b);
    Encoder enc;
    enc.in = nn::Conv1d::create(params_, name + ".in", partition_.width(b), E, kSame3, rng);
    enc.res.resize(stages_);
    for (int s = 0; s < stages_; ++s) {
      enc.down.push_back(nn::Conv1d::create(params_, name + ".down" + std::to_string(s), E, E, kDown, rng));
      int dilation = 1;
      for (int r = 0; r < config_.res_blocks; ++r, dilation *= 3)
        enc.res[s].push_back(nn::ResBlock::create(
            params_, name + ".res" + std::to_string(s) + "_" + std::to_string(r), E, dilation, act, rng));
    }
    enc.out = nn::Conv1d::create(params_, name + ".out", E, config_.block_dim(), kSame3, rng);
    encoders_.push_back(std::move(enc));
  }
  const int W = config_.decoder_width;
  decoder_.in = nn::Conv1d::create(params_, "dec.in", config_.latent_width(), W, kSame3, rng);
  decoder_.res.resize(stages_);
  for (int s = 0; s < stages_; ++s) {
    int dilation = 1;
    for (int r = 0; r < config_.res_blocks; ++r, dilation *= 3)
      decoder_.res[s].push_back(nn::ResBlock::create(
          params_, "dec.res" + std::to_string(s) + "_" + std::to_string(r), W, dilation, act, rng));
    decoder_.up.push_back(nn::Conv1d::create(params_, "dec.up" + std::to_string(s), W, W, kSame3, rng));
  }
  decoder_.penultimate = nn::Conv1d::create(params_, "dec.post", W, W, kSame3, rng);
  decoder_.out = nn::Conv1d::create(params_, "dec.out", W, layout_.feature_dim(), kSame3, rng);

  // Placeholder codes on the unit sphere; training re-seeds them from encoder outputs.
  for (int b = 0; b < partition_.num_blocks(); ++b) {
    Mat init(config_.codebook_size, config_.block_dim());
    for (Eigen::Index i = 0; i < init.size(); ++i) init.data()[i] = rng.normal();
    init.rowwise().normalize();
    codebooks_.emplace_back(std::move(init));
  }
  stats_.mean = RowVec::Zero(layout_.feature_dim());
  stats_.std = RowVec::Ones(layout_.feature_dim());
}

void Codec::set_stats(data::NormStats stats) {
  if (stats.mean.size() != layout_.feature_dim() || stats.std.size() != layout_.feature_dim())
    throw LayoutError("normalization statistics do not match the feature layout");
  stats_ = std::move(stats);
}

int Codec::latent_length(int frames) const {
  if (frames < config_.downsample || frames % config_.downsample != 0)
    throw ShapeError("frame count " + std::to_string(frames) + " is not divisible by " +
                     std::to_string(config_.downsample));
  return frames / config_.downsample;
}

std::vector<Var> Codec::encode_blocks(nn::Graph& g, const Mat& normalized) const {
  motion::check_layout(normalized, layout_);
  latent_length(static_cast<int>(normalized.rows()));
  const auto blocks = partition_.split(normalized);
  const nn::Activation act = config_.activation;
  std::vector<Var> out;
  for (int b = 0; b < partition_.num_blocks(); ++b) {
    const Encoder& enc = encoders_[b];
    Var h = nn::activate(enc.in(g, params_, g.constant(blocks[b])), act);
    for (int s = 0; s < stages_; ++s) {
      h = enc.down[s](g, params_, h);
      for (const auto& r : enc.res[s]) h = r(g, params_, h);
    }
    out.push_back(nn::l2_normalize_rows(enc.out(g, params_, nn::activate(h, act))));
  }
  return out;
}

LatentSequence Codec::encode(const Mat& normalized) const {
  nn::Graph g;
  const auto blocks = encode_blocks(g, normalized);
  LatentSequence out;
  out.values.resize(blocks[0].rows(), config_.latent_width());
  int offset = 0;
  for (const Var& b : blocks) {
    out.values.middleCols(offset, b.cols()) = b.value();
    offset += static_cast<int>(b.cols());
  }
  return out;
}

Quantized Codec::quantize(const LatentSequence& latent) const {
  return quantize_nearest(latent, codebooks_);
}

Var Codec::decode(nn::Graph& g, Var latent) const {
  if (latent.cols() != config_.latent_width())
    throw ShapeError("latent width " + std::to_string(latent.cols()) + " != " +
                     std::to_string(config_.latent_width()));
  const nn::Activation act = config_.activation;
  Var h = nn::activate(decoder_.in(g, params_, latent), act);
  for (int s = 0; s < stages_; ++s) {
    for (const auto& r : decoder_.res[s]) h = r(g, params_, h);
    h = nn::upsample_rows(h, 2);
    h = nn::activate(decoder_.up[s](g, params_, h), act);
  }
  h = nn::activate(decoder_.penultimate(g, params_, h), act);
  return decoder_.out(g, params_, h);
}

Mat Codec::decode(const Mat& latent) const {
  nn::Graph g;
  return decode(g, g.constant(latent)).value();
}

Mat Codec::reconstruct(const Mat& normalized) const {
  return decode(quantize(encode(normalized)).latent.values);
}

LatentSequence Codec::lookup(const IndexMat& indices) const {
  if (indices.cols() != partition_.num_blocks()) throw ShapeError("index matrix has wrong width");
  LatentSequence out;
  out.quantized = true;
  out.values.resize(indices.rows(), config_.latent_width());
  for (Eigen::Index t = 0; t < indices.rows(); ++t) {
    int offset = 0;
    for (int b = 0; b < partition_.num_blocks(); ++b) {
      const Codebook& cb = codebooks_[b];
      const int i = indices(t, b);
      if (i < 0 || i >= cb.size()) throw InputError("code index out of range");
      out.values.block(t, offset, 1, cb.dim()) = cb.codes.row(i);
      offset += cb.dim();
    }
  }
  return out;
}

void Codec::save(nn::Container& c, const std::string& prefix) const {
  c.config[prefix + "config"] = config_.to_json();
  nn::append_params(c, params_, prefix);
  for (std::size_t b = 0; b < codebooks_.size(); ++b) {
    const std::string name = prefix + "codebook." + std::to_string(b);
    c.tensors.push_back({name + ".codes", codebooks_[b].codes});
    c.tensors.push_back({name + ".ema_count", codebooks_[b].ema_count});
    c.tensors.push_back({name + ".ema_sum", codebooks_[b].ema_sum});
  }
  c.tensors.push_back({prefix + "stats.mean", stats_.mean});
  c.tensors.push_back({prefix + "stats.std", stats_.std});
}

Codec Codec::load(const nn::Container& c, const std::string& prefix) {
  if (!c.config.contains(prefix + "config")) throw LoadError("container holds no codec");
  Codec codec(VqvaeConfig::from_json(c.config.at(prefix + "config")),
              motion::SkeletonSpec::humanoid22(), 0);
  nn::assign_params(codec.params_, c, prefix);
  for (std::size_t b = 0; b < codec.codebooks_.size(); ++b) {
    const std::string name = prefix + "codebook." + std::to_string(b);
    Codebook& cb = codec.codebooks_[b];
    cb.codes = c.tensor(name + ".codes");
    cb.ema_count = c.tensor(name + ".ema_count");
    cb.ema_sum = c.tensor(name + ".ema_sum");
    if (cb.codes.rows() != codec.config_.codebook_size || cb.codes.cols() != codec.config_.block_dim())
      throw LoadError("codebook " + std::to_string(b) + " has the wrong shape");
  }
  codec.set_stats({c.tensor(prefix + "stats.mean"), c.tensor(prefix + "stats.std")});
  return codec;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct Snapshot {
  nn::ParamStore params;
  std::vector<Codebook> codebooks;
};

void round_codebooks(std::vector<Codebook>& codebooks) {
  for (Codebook& cb : codebooks) {
    cb.codes = cb.codes.cast<float>().cast<double>();
    cb.ema_count = cb.ema_count.cast<float>().cast<double>();
    cb.ema_sum = cb.ema_sum.cast<float>().cast<double>();
  }
}

}  // namespace

VqTrainReport train_codec(Codec& codec, const std::vector<Mat>& clips, std::uint64_t seed,
                          const EpochCallback& on_epoch) {
  if (clips.empty()) throw InputError("no training clips");
  const VqvaeConfig& cfg = codec.config();
  const int B = codec.partition().num_blocks();
  const int N = static_cast<int>(clips.size());
  const int batches = (N + cfg.batch_size - 1) / cfg.batch_size;
  const int total_steps = std::max(1, cfg.epochs * batches);

  nn::ParamStore& params = codec.params();
  nn::AdamW opt(params, nn::AdamWConfig{0.9, 0.99, 1e-8, cfg.weight_decay, cfg.clip_norm});
  VqTrainReport report;
  Snapshot good{params, codec.codebooks()};

  // Seed the codebooks from encoder outputs of the first batch.
  {
    std::vector<Mat> rows(B);
    for (int i = 0; i < std::min(N, cfg.batch_size); ++i) {
      const LatentSequence z = codec.encode(clips[i]);
      int offset = 0;
      for (int b = 0; b < B; ++b) {
        const int d = codec.codebooks()[b].dim();
        Mat& acc = rows[b];
        const Mat slice = z.values.middleCols(offset, d);
        acc.conservativeResize(acc.rows() + slice.rows(), d);
        acc.bottomRows(slice.rows()) = slice;
        offset += d;
      }
    }
    CounterRng rng = CounterRng::stream(seed, {0x696e6974ULL});
    for (int b = 0; b < B; ++b) {
      Mat init(cfg.codebook_size, rows[b].cols());
      std::vector<int> order(rows[b].rows());
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      for (int i = 0; i < cfg.codebook_size; ++i) {
        const int r = i < static_cast<int>(order.size()) ? order[i]
                                                          : static_cast<int>(rng.below(order.size()));
        init.row(i) = rows[b].row(r);
      }
      codec.codebooks()[b] = Codebook(std::move(init));
    }
  }

  std::vector<int> order(N);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    CounterRng shuffle_rng = CounterRng::stream(seed, {1, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0, epoch_rec = 0.0, epoch_commit = 0.0;
    for (int batch = 0; batch < batches; ++batch) {
      const int begin = batch * cfg.batch_size;
      const int end = std::min(N, begin + cfg.batch_size);
      nn::Gradients grads(params);
      std::vector<Mat> batch_latents(B);
      std::vector<std::vector<int>> batch_assign(B);
      double batch_loss = 0.0;
      for (int k = begin; k < end; ++k) {
        const Mat& x = clips[order[k]];
        nn::Graph g(&params, &grads);
        const auto z = codec.encode_blocks(g, x);
        std::vector<Var> st;
        Var commitment;
        double quant = 0.0;
        for (int b = 0; b < B; ++b) {
          const Codebook& cb = codec.codebooks()[b];
          const auto idx = cb.nearest(z[b].value());
          Mat zq(z[b].rows(), z[b].cols());
          for (Eigen::Index t = 0; t < zq.rows(); ++t) zq.row(t) = cb.codes.row(idx[t]);
          Var c = nn::mse(z[b], zq);
          // The quantization term moves the codes only through EMA; it is
          // tracked for the loss history and carries no gradient here.
          quant += c.scalar();
          commitment = commitment.valid() ? nn::add(commitment, c) : c;
          st.push_back(nn::straight_through(z[b], zq));
          Mat& acc = batch_latents[b];
          acc.conservativeResize(acc.rows() + zq.rows(), zq.cols());
          acc.bottomRows(zq.rows()) = z[b].value();
          batch_assign[b].insert(batch_assign[b].end(), idx.begin(), idx.end());
        }
        Var rec = nn::mse(codec.decode(g, nn::concat_cols(st)), x);
        Var loss = nn::add(rec, nn::scale(commitment, cfg.beta));
        const double total = loss.scalar() + quant;
        if (!std::isfinite(total)) {
          params = good.params;
          codec.codebooks() = good.codebooks;
          throw TrainingError("non-finite VQ-VAE loss at epoch " + std::to_string(epoch), epoch);
        }
        batch_loss += total;
        epoch_rec += rec.scalar();
        epoch_commit += commitment.scalar();
        g.backward(loss);
      }
      const int count = end - begin;
      grads.scale(1.0 / count);
      const double progress = static_cast<double>(report.steps) / total_steps;
      opt.step(params, grads, nn::linear_schedule(cfg.learning_rate, cfg.final_learning_rate, progress));
      CounterRng reset_rng = CounterRng::stream(seed, {2, static_cast<std::uint64_t>(report.steps)});
      for (int b = 0; b < B; ++b) {
        Codebook& cb = codec.codebooks()[b];
        cb.ema_update(batch_latents[b], batch_assign[b], cfg.ema_decay);
        if (report.steps >= cfg.warmup_steps)
          report.resets += cb.reset_dead(batch_latents[b], cfg.reset_threshold, reset_rng);
      }
      ++report.steps;
      epoch_loss += batch_loss;
    }
    report.loss.push_back(epoch_loss / N);
    report.reconstruction.push_back(epoch_rec / N);
    report.commitment.push_back(epoch_commit / N);
    bool finite = std::isfinite(report.loss.back());
    for (const auto& p : params.all()) finite = finite && p.value.allFinite();
    if (!finite) {
      params = good.params;
      codec.codebooks() = good.codebooks;
      throw TrainingError("non-finite VQ-VAE state after epoch " + std::to_string(epoch), epoch);
    }
    good = Snapshot{params, codec.codebooks()};
    if (on_epoch) on_epoch(epoch, report.loss.back());
  }
  // Keep the in-memory model identical to what a saved container reloads.
  params.round_to_float();
  round_codebooks(codec.codebooks());
  return report;
}

TrainedCodec train_vqvae(const data::Corpus& corpus, const VqvaeConfig& config, std::uint64_t seed,
                         const motion::SkeletonSpec& skeleton, const EpochCallback& on_epoch) {
  Codec codec(config, skeleton, seed);
  codec.set_stats(corpus.stats);
  std::vector<Mat> clips;
  for (int i : corpus.train) clips.push_back(data::normalize(corpus.samples[i].motion.features, corpus.stats));
  if (clips.empty())
    for (const auto& s : corpus.samples) clips.push_back(data::normalize(s.motion.features, corpus.stats));
  VqTrainReport report = train_codec(codec, clips, seed, on_epoch);
  return {std::move(codec), std::move(report)};
}

double reconstruction_mpjpe(const Codec& codec, const std::vector<const data::CorpusSample*>& samples) {
  if (samples.empty()) throw InputError("no samples");
  double total = 0.0;
  long count = 0;
  const int J = codec.layout().num_joints;
  for (const data::CorpusSample* s : samples) {
    const Mat x = data::normalize(s->motion.features, codec.stats());
    const Mat rec = data::denormalize(codec.reconstruct(x), codec.stats());
    const Mat a = motion::recover_global_positions(s->motion.features, codec.layout());
    const Mat b = motion::recover_global_positions(rec, codec.layout());
    for (int t = 0; t < s->true_length; ++t)
      for (int j = 0; j < J; ++j) {
        total += (a.block<1, 3>(t, 3 * j) - b.block<1, 3>(t, 3 * j)).norm();
        ++count;
      }
  }
  return total / static_cast<double>(count);
}

}  // namespace tlc::vq
