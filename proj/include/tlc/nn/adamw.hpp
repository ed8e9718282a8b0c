// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "tlc/nn/graph.hpp"

namespace tlc::nn {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  /// Global gradient-norm clip; <= 0 disables clipping.
  double clip_norm = 1.0;
};

/// AdamW with decoupled weight decay applied to ".weight" parameters only.
class AdamW {
 public:
  AdamW(const ParamStore& store, AdamWConfig config);

  /// Applies one update with learning rate `lr`; `grads` may be rescaled by clipping.
  void step(ParamStore& store, Gradients& grads, double lr);
  int steps() const noexcept { return steps_; }

 private:
  AdamWConfig config_;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
  std::vector<bool> decay_;
  int steps_ = 0;
};

/// Linear interpolation of the learning rate from `start` to `end` over training.
double linear_schedule(double start, double end, double progress);

}  // namespace tlc::nn
