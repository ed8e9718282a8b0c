// SPDX-License-Identifier: Apache-2.0
#include "tlc/nn/adamw.hpp"

#include <algorithm>
#include <cmath>

namespace tlc::nn {

AdamW::AdamW(const ParamStore& store, AdamWConfig config) : config_(config) {
  for (const auto& p : store.all()) {
    m_.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
    decay_.push_back(p.name.ends_with(".weight"));
  }
}

void AdamW::step(ParamStore& store, Gradients& grads, double lr) {
  if (config_.clip_norm > 0.0) {
    const double norm = std::sqrt(grads.squared_norm());
    if (norm > config_.clip_norm) grads.scale(config_.clip_norm / norm);
  }
  ++steps_;
  const double bc1 = 1.0 - std::pow(config_.beta1, steps_);
  const double bc2 = 1.0 - std::pow(config_.beta2, steps_);
  for (int i = 0; i < store.size(); ++i) {
    Mat& w = store.at(i).value;
    const Mat& g = grads[i];
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseProduct(g);
    if (decay_[i] && config_.weight_decay > 0.0) w *= 1.0 - lr * config_.weight_decay;
    w.array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + config_.eps);
  }
}

double linear_schedule(double start, double end, double progress) {
  progress = std::clamp(progress, 0.0, 1.0);
  return start + (end - start) * progress;
}

}  // namespace tlc::nn
