// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "tlc/nn/graph.hpp"

namespace tlc::nn {

enum class Activation { relu, gelu };

// Elementwise and linear algebra.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// a + row, broadcasting a 1 x C row over every row of a.
Var add_row(Var a, Var row);
/// a * row, broadcasting a 1 x C row (per-column scaling).
Var mul_row(Var a, Var row);
Var relu(Var x);
Var gelu(Var x);
Var activate(Var x, Activation act);

// Shape manipulation.
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var x, Eigen::Index start, Eigen::Index count);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var x, Eigen::Index start, Eigen::Index count);
/// Repeats every row `factor` times (nearest-neighbour temporal upsampling).
Var upsample_rows(Var x, int factor);

struct ConvShape {
  int kernel = 3;
  int stride = 1;
  int padding = 1;
  int dilation = 1;

  Eigen::Index output_length(Eigen::Index input_length) const {
    return (input_length + 2 * padding - dilation * (kernel - 1) - 1) / stride + 1;
  }
};

/// Temporal convolution over a T x Cin sequence. `weight` is (kernel*Cin) x Cout
/// with row k*Cin + c holding tap k of input channel c; `bias` is 1 x Cout.
Var conv1d(Var x, Var weight, Var bias, const ConvShape& shape);

/// Row-wise layer normalization with 1 x C gain and bias.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

/// Unmasked multi-head scaled dot-product attention over rows.
Var attention(Var q, Var k, Var v, int heads);

/// x / sqrt(|x|^2 + eps) per row.
Var l2_normalize_rows(Var x, double eps = 1e-12);

Var softmax_rows(Var x);

/// Forward value `value`, backward passes the gradient to `x` unchanged.
Var straight_through(Var x, Mat value);

/// Sparse input vector (index, weight) times weight (N x C) plus bias (1 x C).
Var sparse_linear(std::span<const std::pair<int, double>> input, Var weight, Var bias);

/// Node with a caller-supplied vector-Jacobian product.
Var custom(Var x, Mat value, std::function<Mat(const Mat& grad_out)> vjp);

// Reductions and losses (all return 1 x 1).
Var sum(Var x);
Var mean(Var x);
/// Mean squared error against a constant target.
Var mse(Var x, const Mat& target);
/// Mean squared error between two nodes.
Var mse(Var a, Var b);
/// sum(w * (x - target)^2) / sum(w); 0 if the weights are all zero.
Var weighted_mse(Var x, const Mat& target, const Mat& weight);
/// Mean over rows of -log softmax(logits)[row, target[row]].
Var cross_entropy(Var logits, std::span<const int> targets);

}  // namespace tlc::nn
