// SPDX-License-Identifier: Apache-2.0
#include "tlc/nn/layers.hpp"

#include <cmath>

namespace tlc::nn {

Mat uniform_init(Eigen::Index rows, Eigen::Index cols, double fan_in, CounterRng& rng) {
  const double bound = 1.0 / std::sqrt(fan_in);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

Linear Linear::create(ParamStore& store, const std::string& name, int in, int out,
                      CounterRng& rng) {
  Linear l;
  l.in = in;
  l.out = out;
  l.weight = store.add(name + ".weight", uniform_init(in, out, in, rng));
  l.bias = store.add(name + ".bias", uniform_init(1, out, in, rng));
  return l;
}

Var Linear::operator()(Graph& g, const ParamStore& store, Var x) const {
  return add_row(matmul(x, g.param(store, weight)), g.param(store, bias));
}

Conv1d Conv1d::create(ParamStore& store, const std::string& name, int in, int out,
                      const ConvShape& shape, CounterRng& rng) {
  Conv1d c;
  c.in = in;
  c.out = out;
  c.shape = shape;
  const double fan_in = static_cast<double>(in) * shape.kernel;
  c.weight = store.add(name + ".weight", uniform_init(shape.kernel * in, out, fan_in, rng));
  c.bias = store.add(name + ".bias", uniform_init(1, out, fan_in, rng));
  return c;
}

Var Conv1d::operator()(Graph& g, const ParamStore& store, Var x) const {
  return conv1d(x, g.param(store, weight), g.param(store, bias), shape);
}

ResBlock ResBlock::create(ParamStore& store, const std::string& name, int width, int dilation,
                          Activation act, CounterRng& rng) {
  ResBlock r;
  r.act = act;
  r.dilated = Conv1d::create(store, name + ".conv1", width, width,
                             ConvShape{3, 1, dilation, dilation}, rng);
  r.pointwise = Conv1d::create(store, name + ".conv2", width, width, ConvShape{1, 1, 0, 1}, rng);
  return r;
}

Var ResBlock::operator()(Graph& g, const ParamStore& store, Var x) const {
  Var h = dilated(g, store, activate(x, act));
  h = pointwise(g, store, activate(h, act));
  return add(x, h);
}

LayerNorm LayerNorm::create(ParamStore& store, const std::string& name, int width) {
  LayerNorm n;
  n.gain = store.add(name + ".gain", Mat::Ones(1, width));
  n.bias = store.add(name + ".bias", Mat::Zero(1, width));
  return n;
}

Var LayerNorm::operator()(Graph& g, const ParamStore& store, Var x) const {
  return layer_norm(x, g.param(store, gain), g.param(store, bias));
}

TransformerLayer TransformerLayer::create(ParamStore& store, const std::string& name, int width,
                                          int heads, int ff_width, CounterRng& rng) {
  TransformerLayer t;
  t.heads = heads;
  t.norm1 = LayerNorm::create(store, name + ".norm1", width);
  t.qkv = Linear::create(store, name + ".qkv", width, 3 * width, rng);
  t.proj = Linear::create(store, name + ".proj", width, width, rng);
  t.norm2 = LayerNorm::create(store, name + ".norm2", width);
  t.ff1 = Linear::create(store, name + ".ff1", width, ff_width, rng);
  t.ff2 = Linear::create(store, name + ".ff2", ff_width, width, rng);
  return t;
}

Var TransformerLayer::operator()(Graph& g, const ParamStore& store, Var x) const {
  const Eigen::Index w = x.cols();
  Var qkv_out = qkv(g, store, norm1(g, store, x));
  Var a = attention(slice_cols(qkv_out, 0, w), slice_cols(qkv_out, w, w),
                    slice_cols(qkv_out, 2 * w, w), heads);
  x = add(x, proj(g, store, a));
  Var h = ff2(g, store, gelu(ff1(g, store, norm2(g, store, x))));
  return add(x, h);
}

}  // namespace tlc::nn
