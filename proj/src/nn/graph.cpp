// SPDX-License-Identifier: Apache-2.0
#include "tlc/nn/graph.hpp"

#include "tlc/common/error.hpp"

namespace tlc::nn {

ParamId ParamStore::add(std::string name, Mat init) {
  if (find(name)) throw ConfigError("duplicate parameter " + name);
  params_.push_back({std::move(name), std::move(init)});
  return static_cast<ParamId>(params_.size() - 1);
}

std::size_t ParamStore::num_values() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

std::optional<ParamId> ParamStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return static_cast<ParamId>(i);
  return std::nullopt;
}

void ParamStore::round_to_float() {
  for (auto& p : params_)
    p.value = p.value.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
}

Gradients::Gradients(const ParamStore& store) {
  grads_.reserve(store.size());
  for (const auto& p : store.all()) grads_.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
}

void Gradients::zero() {
  for (auto& g : grads_) g.setZero();
}

void Gradients::scale(double s) {
  for (auto& g : grads_) g *= s;
}

double Gradients::squared_norm() const {
  double n = 0.0;
  for (const auto& g : grads_) n += g.squaredNorm();
  return n;
}

bool Gradients::all_finite() const {
  for (const auto& g : grads_)
    if (!g.allFinite()) return false;
  return true;
}

const Mat& Var::value() const { return graph_->value(id_); }
Mat& Var::grad() const { return graph_->grad(id_); }
bool Var::needs_grad() const { return graph_->needs_grad(id_); }

Var Graph::constant(Mat value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Graph::input(Mat value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Graph::param(const ParamStore& store, ParamId id) {
  Node n;
  n.ref = &store.value(id);
  if (&store == trainable_ && sink_ != nullptr) {
    n.needs_grad = true;
    n.param = id;
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Graph::record(Mat value, bool needs_grad, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Mat& Graph::grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) {
    const Mat& v = n.ref ? *n.ref : n.value;
    n.grad = Mat::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

void Graph::backward(Var root) {
  if (root.graph() != this) throw ShapeError("backward root belongs to another graph");
  if (value(root.id()).size() != 1) throw ShapeError("backward root must be a scalar");
  if (!needs_grad(root.id())) return;
  grad(root.id())(0, 0) += 1.0;
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, id);
  }
  if (sink_ == nullptr) return;
  for (const Node& n : nodes_)
    if (n.param >= 0 && n.grad.size() != 0) (*sink_)[n.param] += n.grad;
}

}  // namespace tlc::nn
