// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "tlc/common/rng.hpp"
#include "tlc/nn/graph.hpp"
#include "tlc/nn/ops.hpp"

namespace tlc::nn {

/// Weight init: uniform in +-1/sqrt(fan_in), the common default for linear and conv layers.
Mat uniform_init(Eigen::Index rows, Eigen::Index cols, double fan_in, CounterRng& rng);

struct Linear {
  ParamId weight = -1;  // in x out
  ParamId bias = -1;    // 1 x out
  int in = 0;
  int out = 0;

  static Linear create(ParamStore& store, const std::string& name, int in, int out,
                       CounterRng& rng);
  Var operator()(Graph& g, const ParamStore& store, Var x) const;
};

struct Conv1d {
  ParamId weight = -1;
  ParamId bias = -1;
  int in = 0;
  int out = 0;
  ConvShape shape;

  static Conv1d create(ParamStore& store, const std::string& name, int in, int out,
                       const ConvShape& shape, CounterRng& rng);
  Var operator()(Graph& g, const ParamStore& store, Var x) const;
};

/// x + conv1x1(act(conv3_dilated(act(x)))).
struct ResBlock {
  Conv1d dilated;
  Conv1d pointwise;
  Activation act = Activation::relu;

  static ResBlock create(ParamStore& store, const std::string& name, int width, int dilation,
                         Activation act, CounterRng& rng);
  Var operator()(Graph& g, const ParamStore& store, Var x) const;
};

struct LayerNorm {
  ParamId gain = -1;
  ParamId bias = -1;

  static LayerNorm create(ParamStore& store, const std::string& name, int width);
  Var operator()(Graph& g, const ParamStore& store, Var x) const;
};

/// Pre-norm transformer encoder layer: x += MHA(LN(x)); x += FFN(LN(x)).
struct TransformerLayer {
  LayerNorm norm1;
  LayerNorm norm2;
  Linear qkv;
  Linear proj;
  Linear ff1;
  Linear ff2;
  int heads = 1;

  static TransformerLayer create(ParamStore& store, const std::string& name, int width, int heads,
                                 int ff_width, CounterRng& rng);
  Var operator()(Graph& g, const ParamStore& store, Var x) const;
};

}  // namespace tlc::nn
