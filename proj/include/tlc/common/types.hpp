// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

namespace tlc {

/// Row-major dense matrix. Sequences are stored time-major: one row per frame
/// (or latent step), one column per channel.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

}  // namespace tlc
