// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tlc/common/types.hpp"

namespace tlc::nn {

using ParamId = int;

struct Parameter {
  std::string name;
  Mat value;
};

/// Named, ordered set of trainable matrices. Order is the serialization order.
class ParamStore {
 public:
  ParamId add(std::string name, Mat init);

  Parameter& at(ParamId id) { return params_.at(id); }
  const Parameter& at(ParamId id) const { return params_.at(id); }
  const Mat& value(ParamId id) const { return params_.at(id).value; }

  int size() const noexcept { return static_cast<int>(params_.size()); }
  std::size_t num_values() const noexcept;
  std::optional<ParamId> find(std::string_view name) const;
  const std::vector<Parameter>& all() const noexcept { return params_; }

  /// Rounds every value to the nearest float32, matching what a saved model holds.
  void round_to_float();

 private:
  std::vector<Parameter> params_;
};

/// Gradient buffers shaped like a ParamStore.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParamStore& store);

  Mat& operator[](ParamId id) { return grads_.at(id); }
  const Mat& operator[](ParamId id) const { return grads_.at(id); }
  int size() const noexcept { return static_cast<int>(grads_.size()); }

  void zero();
  void scale(double s);
  double squared_norm() const;
  bool all_finite() const;

 private:
  std::vector<Mat> grads_;
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its graph lives.
class Var {
 public:
  Var() = default;

  const Mat& value() const;
  /// Gradient buffer (allocated as zeros on first access).
  Mat& grad() const;
  bool needs_grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

  Graph* graph() const noexcept { return graph_; }
  int id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, int id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode tape. Nodes are recorded in topological order, so backward is
/// a single reverse sweep. A graph is single-use and single-threaded.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int self)>;

  /// Parameters of `trainable` receive gradients in `sink` on backward; those
  /// of any other store enter the graph as constants.
  explicit Graph(const ParamStore* trainable = nullptr, Gradients* sink = nullptr)
      : trainable_(trainable), sink_(sink) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Mat value);
  /// Leaf that requires a gradient (e.g. a latent being optimized).
  Var input(Mat value);
  Var param(const ParamStore& store, ParamId id);

  /// Records an op result. `backward` reads grad(self) and accumulates into
  /// its parents' grads; it is only called when needs_grad is true.
  Var record(Mat value, bool needs_grad, BackwardFn backward);

  /// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates.
  void backward(Var root);

  const Mat& value(int id) const {
    const Node& n = nodes_[id];
    return n.ref ? *n.ref : n.value;
  }
  Mat& grad(int id);
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  Var var(int id) { return Var(this, id); }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    const Mat* ref = nullptr;
    Mat grad;
    bool needs_grad = false;
    BackwardFn backward;
    ParamId param = -1;
  };

  const ParamStore* trainable_;
  Gradients* sink_;
  std::vector<Node> nodes_;
};

}  // namespace tlc::nn
