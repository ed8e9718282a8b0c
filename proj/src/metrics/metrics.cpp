// SPDX-License-Identifier: Apache-2.0
#include "tlc/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "tlc/common/error.hpp"
#include "tlc/vq/codec.hpp"

namespace tlc::metrics {

using motion::Group;

nlohmann::json ControlErrorReport::to_json() const {
  return {{"traj_err_fraction", traj_err_fraction}, {"loc_err_fraction", loc_err_fraction},
          {"avg_err_cm", avg_err_cm},               {"threshold_m", threshold_m},
          {"tracks", tracks},                       {"keyframes", keyframes}};
}

ControlErrorReport control_accuracy(const std::vector<ControlCase>& cases,
                                    const motion::SkeletonSpec& skeleton, double threshold_m) {
  if (!(threshold_m > 0.0)) throw InputError("threshold must be positive");
  ControlErrorReport r;
  r.threshold_m = threshold_m;
  int failed_tracks = 0, failed_keys = 0;
  double total = 0.0;
  for (const ControlCase& c : cases) {
    const Mat& pos = *c.positions;
    const motion::PartialTrajectory& traj = *c.trajectory;
    if (pos.rows() < traj.length() || pos.cols() != 3 * skeleton.num_joints())
      throw ShapeError("positions do not cover the trajectory");
    for (Group g : motion::kAllGroups) {
      const int j = skeleton.key_joint(g);
      int keys = 0;
      bool failed = false;
      for (int t = 0; t < traj.length(); ++t) {
        if (!traj.specified(t, g)) continue;
        const double d = (pos.block(t, 3 * j, 1, 3).transpose() - traj.waypoint(t, g)).norm();
        total += d;
        ++keys;
        if (d > threshold_m) {
          ++failed_keys;
          failed = true;
        }
      }
      if (keys == 0) continue;
      ++r.tracks;
      r.keyframes += keys;
      failed_tracks += failed;
    }
  }
  if (r.keyframes == 0) throw UndefinedMetricsError("no keyframes to evaluate");
  r.traj_err_fraction = static_cast<double>(failed_tracks) / r.tracks;
  r.loc_err_fraction = static_cast<double>(failed_keys) / r.keyframes;
  r.avg_err_cm = 100.0 * total / r.keyframes;
  return r;
}

ControlErrorReport control_accuracy(const Mat& positions, const motion::PartialTrajectory& traj,
                                    const motion::SkeletonSpec& skeleton, double threshold_m) {
  return control_accuracy(std::vector<ControlCase>{{&positions, &traj}}, skeleton, threshold_m);
}

RowVec flatten(const Mat& features, int length) {
  if (length < 0 || length > features.rows()) throw ShapeError("flatten length out of range");
  RowVec out(static_cast<Eigen::Index>(length) * features.cols());
  for (int t = 0; t < length; ++t) out.segment(t * features.cols(), features.cols()) = features.row(t);
  return out;
}

double diversity(const std::vector<RowVec>& features, CounterRng& rng, int num_pairs) {
  const int n = static_cast<int>(features.size());
  if (n < 2) throw InputError("diversity needs at least two motions");
  if (num_pairs < 1) throw InputError("num_pairs must be positive");
  for (const RowVec& f : features)
    if (f.size() != features[0].size()) throw InputError("feature vectors differ in width");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return std::lexicographical_compare(features[a].data(), features[a].data() + features[a].size(),
                                        features[b].data(), features[b].data() + features[b].size());
  });
  std::shuffle(order.begin(), order.end(), rng);
  const int pairs = std::min(num_pairs, n / 2);
  double total = 0.0;
  for (int p = 0; p < pairs; ++p) total += (features[order[2 * p]] - features[order[2 * p + 1]]).norm();
  return total / pairs;
}

double multimodality(const std::vector<std::vector<RowVec>>& groups) {
  if (groups.empty()) throw InputError("multimodality needs at least one group");
  double total = 0.0;
  for (const auto& group : groups) {
    const int k = static_cast<int>(group.size());
    if (k < 2) throw InputError("every multimodality group needs at least two samples");
    double sum = 0.0;
    for (int a = 0; a < k; ++a)
      for (int b = a + 1; b < k; ++b) {
        if (group[a].size() != group[b].size()) throw InputError("feature vectors differ in width");
        sum += (group[a] - group[b]).norm();
      }
    total += sum / (k * (k - 1) / 2);
  }
  return total / static_cast<double>(groups.size());
}

namespace {

struct Gaussian {
  Eigen::VectorXd mean;
  Mat cov;
};

Gaussian fit(const Mat& x) {
  if (x.rows() < 2) throw InputError("FID proxy needs at least two samples per side");
  Gaussian g;
  g.mean = x.colwise().mean().transpose();
  const Mat centered = x.rowwise() - g.mean.transpose();
  g.cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
  g.cov.diagonal().array() += 1e-6;
  return g;
}

Mat psd_sqrt(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(a);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// Tr((A B)^{1/2}) computed as Tr((A^{1/2} B A^{1/2})^{1/2}).
double trace_sqrt_product(const Mat& a, const Mat& b) {
  const Mat ra = psd_sqrt(a);
  Mat inner = ra * b * ra;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(inner, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
}

}  // namespace

double fid_proxy(const Mat& real, const Mat& generated) {
  if (real.cols() != generated.cols()) throw InputError("FID proxy feature widths differ");
  const Gaussian a = fit(real), b = fit(generated);
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const double cross = 0.5 * (trace_sqrt_product(a.cov, b.cov) + trace_sqrt_product(b.cov, a.cov));
  return mean_term + a.cov.trace() + b.cov.trace() - 2.0 * cross;
}

RowVec fid_features(const vq::Codec& codec, const Mat& normalized) {
  const vq::LatentSequence z = codec.encode(normalized);
  return z.values.colwise().mean();
}

}  // namespace tlc::metrics
