// SPDX-License-Identifier: Apache-2.0
#include "tlc/nn/ops.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "tlc/common/error.hpp"

namespace tlc::nn {

namespace {

Graph& graph_of(Var a) {
  if (!a.valid()) throw ShapeError("invalid variable");
  return *a.graph();
}

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
}

bool any_needs(std::span<const Var> vs) {
  for (const Var& v : vs)
    if (v.needs_grad()) return true;
  return false;
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a);
  const Mat& av = a.value();
  const Mat& bv = b.value();
  if (av.cols() != bv.rows()) throw ShapeError("matmul: inner dimensions differ");
  Mat out(av.rows(), bv.cols());
  out.noalias() = av * bv;
  const int ia = a.id(), ib = b.id();
  return g.record(std::move(out), a.needs_grad() || b.needs_grad(), [ia, ib](Graph& g, int self) {
    const Mat& go = g.grad(self);
    if (g.needs_grad(ia)) g.grad(ia).noalias() += go * g.value(ib).transpose();
    if (g.needs_grad(ib)) g.grad(ib).noalias() += g.value(ia).transpose() * go;
  });
}

Var add(Var a, Var b) {
  Graph& g = graph_of(a);
  require_same_shape(a.value(), b.value(), "add");
  const int ia = a.id(), ib = b.id();
  return g.record(a.value() + b.value(), a.needs_grad() || b.needs_grad(),
                  [ia, ib](Graph& g, int self) {
                    if (g.needs_grad(ia)) g.grad(ia) += g.grad(self);
                    if (g.needs_grad(ib)) g.grad(ib) += g.grad(self);
                  });
}

Var sub(Var a, Var b) {
  Graph& g = graph_of(a);
  require_same_shape(a.value(), b.value(), "sub");
  const int ia = a.id(), ib = b.id();
  return g.record(a.value() - b.value(), a.needs_grad() || b.needs_grad(),
                  [ia, ib](Graph& g, int self) {
                    if (g.needs_grad(ia)) g.grad(ia) += g.grad(self);
                    if (g.needs_grad(ib)) g.grad(ib) -= g.grad(self);
                  });
}

Var mul(Var a, Var b) {
  Graph& g = graph_of(a);
  require_same_shape(a.value(), b.value(), "mul");
  const int ia = a.id(), ib = b.id();
  return g.record(a.value().cwiseProduct(b.value()), a.needs_grad() || b.needs_grad(),
                  [ia, ib](Graph& g, int self) {
                    const Mat& go = g.grad(self);
                    if (g.needs_grad(ia)) g.grad(ia) += go.cwiseProduct(g.value(ib));
                    if (g.needs_grad(ib)) g.grad(ib) += go.cwiseProduct(g.value(ia));
                  });
}

Var scale(Var a, double s) {
  Graph& g = graph_of(a);
  const int ia = a.id();
  return g.record(a.value() * s, a.needs_grad(),
                  [ia, s](Graph& g, int self) { g.grad(ia) += g.grad(self) * s; });
}

Var add_row(Var a, Var row) {
  Graph& g = graph_of(a);
  const Mat& r = row.value();
  if (r.rows() != 1 || r.cols() != a.cols()) throw ShapeError("add_row: bias shape mismatch");
  Mat out = a.value();
  out.rowwise() += r.row(0);
  const int ia = a.id(), ir = row.id();
  return g.record(std::move(out), a.needs_grad() || row.needs_grad(),
                  [ia, ir](Graph& g, int self) {
                    const Mat& go = g.grad(self);
                    if (g.needs_grad(ia)) g.grad(ia) += go;
                    if (g.needs_grad(ir)) g.grad(ir) += go.colwise().sum();
                  });
}

Var mul_row(Var a, Var row) {
  Graph& g = graph_of(a);
  const Mat& r = row.value();
  if (r.rows() != 1 || r.cols() != a.cols()) throw ShapeError("mul_row: shape mismatch");
  Mat out = a.value().array().rowwise() * r.row(0).array();
  const int ia = a.id(), ir = row.id();
  return g.record(std::move(out), a.needs_grad() || row.needs_grad(),
                  [ia, ir](Graph& g, int self) {
                    const Mat& go = g.grad(self);
                    if (g.needs_grad(ia))
                      g.grad(ia).array() += go.array().rowwise() * g.value(ir).row(0).array();
                    if (g.needs_grad(ir))
                      g.grad(ir) += go.cwiseProduct(g.value(ia)).colwise().sum();
                  });
}

Var relu(Var x) {
  Graph& g = graph_of(x);
  const int ix = x.id();
  return g.record(x.value().cwiseMax(0.0), x.needs_grad(), [ix](Graph& g, int self) {
    g.grad(ix).array() += (g.value(ix).array() > 0.0).select(g.grad(self).array(), 0.0);
  });
}

Var gelu(Var x) {
  Graph& g = graph_of(x);
  const Mat& xv = x.value();
  Mat out = xv.unaryExpr([](double v) {
    return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + 0.044715 * v * v * v)));
  });
  const int ix = x.id();
  return g.record(std::move(out), x.needs_grad(), [ix](Graph& g, int self) {
    const Mat d = g.value(ix).unaryExpr([](double v) {
      const double t = std::tanh(kGeluC * (v + 0.044715 * v * v * v));
      return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * 0.044715 * v * v);
    });
    g.grad(ix) += g.grad(self).cwiseProduct(d);
  });
}

Var activate(Var x, Activation act) { return act == Activation::relu ? relu(x) : gelu(x); }

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
  Graph& g = graph_of(parts[0]);
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Mat out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    spans.emplace_back(p.id(), c);
    c += p.cols();
  }
  return g.record(std::move(out), any_needs(parts), [spans](Graph& g, int self) {
    const Mat& go = g.grad(self);
    for (const auto& [id, start] : spans)
      if (g.needs_grad(id)) g.grad(id) += go.middleCols(start, g.value(id).cols());
  });
}

Var slice_cols(Var x, Eigen::Index start, Eigen::Index count) {
  Graph& g = graph_of(x);
  if (start < 0 || count < 0 || start + count > x.cols()) throw ShapeError("slice_cols: out of range");
  const int ix = x.id();
  return g.record(x.value().middleCols(start, count), x.needs_grad(),
                  [ix, start, count](Graph& g, int self) {
                    g.grad(ix).middleCols(start, count) += g.grad(self);
                  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: nothing to concatenate");
  Graph& g = graph_of(parts[0]);
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column count mismatch");
    rows += p.rows();
  }
  Mat out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    spans.emplace_back(p.id(), r);
    r += p.rows();
  }
  return g.record(std::move(out), any_needs(parts), [spans](Graph& g, int self) {
    const Mat& go = g.grad(self);
    for (const auto& [id, start] : spans)
      if (g.needs_grad(id)) g.grad(id) += go.middleRows(start, g.value(id).rows());
  });
}

Var slice_rows(Var x, Eigen::Index start, Eigen::Index count) {
  Graph& g = graph_of(x);
  if (start < 0 || count < 0 || start + count > x.rows()) throw ShapeError("slice_rows: out of range");
  const int ix = x.id();
  return g.record(x.value().middleRows(start, count), x.needs_grad(),
                  [ix, start, count](Graph& g, int self) {
                    g.grad(ix).middleRows(start, count) += g.grad(self);
                  });
}

Var upsample_rows(Var x, int factor) {
  Graph& g = graph_of(x);
  const Mat& xv = x.value();
  Mat out(xv.rows() * factor, xv.cols());
  for (Eigen::Index t = 0; t < xv.rows(); ++t)
    for (int r = 0; r < factor; ++r) out.row(t * factor + r) = xv.row(t);
  const int ix = x.id();
  return g.record(std::move(out), x.needs_grad(), [ix, factor](Graph& g, int self) {
    const Mat& go = g.grad(self);
    Mat& gx = g.grad(ix);
    for (Eigen::Index t = 0; t < gx.rows(); ++t)
      for (int r = 0; r < factor; ++r) gx.row(t) += go.row(t * factor + r);
  });
}

Var conv1d(Var x, Var weight, Var bias, const ConvShape& s) {
  Graph& g = graph_of(x);
  const Mat& xv = x.value();
  const Mat& w = weight.value();
  const Eigen::Index T = xv.rows(), cin = xv.cols();
  if (w.rows() != s.kernel * cin)
    throw ShapeError("conv1d: weight has " + std::to_string(w.rows()) + " rows, expected " +
                     std::to_string(s.kernel * cin));
  if (bias.value().rows() != 1 || bias.value().cols() != w.cols())
    throw ShapeError("conv1d: bias shape mismatch");
  const Eigen::Index tout = s.output_length(T);
  if (tout < 1) throw ShapeError("conv1d: input too short");

  // im2col: row t holds the receptive field of output step t.
  auto cols = std::make_shared<Mat>(Mat::Zero(tout, s.kernel * cin));
  for (Eigen::Index t = 0; t < tout; ++t) {
    for (int k = 0; k < s.kernel; ++k) {
      const Eigen::Index src = t * s.stride - s.padding + k * s.dilation;
      if (src >= 0 && src < T) cols->block(t, k * cin, 1, cin) = xv.row(src);
    }
  }
  Mat out(tout, w.cols());
  out.noalias() = *cols * w;
  out.rowwise() += bias.value().row(0);

  const int ix = x.id(), iw = weight.id(), ib = bias.id();
  const bool needs = x.needs_grad() || weight.needs_grad() || bias.needs_grad();
  return g.record(std::move(out), needs, [ix, iw, ib, s, cols, T, cin](Graph& g, int self) {
    const Mat& go = g.grad(self);
    if (g.needs_grad(iw)) g.grad(iw).noalias() += cols->transpose() * go;
    if (g.needs_grad(ib)) g.grad(ib) += go.colwise().sum();
    if (g.needs_grad(ix)) {
      Mat dcols(go.rows(), cols->cols());
      dcols.noalias() = go * g.value(iw).transpose();
      Mat& gx = g.grad(ix);
      for (Eigen::Index t = 0; t < go.rows(); ++t) {
        for (int k = 0; k < s.kernel; ++k) {
          const Eigen::Index src = t * s.stride - s.padding + k * s.dilation;
          if (src >= 0 && src < T) gx.row(src) += dcols.block(t, k * cin, 1, cin);
        }
      }
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Graph& g = graph_of(x);
  const Mat& xv = x.value();
  const Eigen::Index C = xv.cols();
  if (gain.value().cols() != C || bias.value().cols() != C)
    throw ShapeError("layer_norm: parameter width mismatch");
  auto xhat = std::make_shared<Mat>(xv.rows(), C);
  auto inv_std = std::make_shared<Eigen::VectorXd>(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    (*inv_std)(r) = 1.0 / std::sqrt(var + eps);
    xhat->row(r) = (xv.row(r).array() - mu) * (*inv_std)(r);
  }
  Mat out = xhat->array().rowwise() * gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  const int ix = x.id(), ig = gain.id(), ib = bias.id();
  const bool needs = x.needs_grad() || gain.needs_grad() || bias.needs_grad();
  return g.record(std::move(out), needs, [ix, ig, ib, xhat, inv_std](Graph& g, int self) {
    const Mat& go = g.grad(self);
    if (g.needs_grad(ig)) g.grad(ig) += go.cwiseProduct(*xhat).colwise().sum();
    if (g.needs_grad(ib)) g.grad(ib) += go.colwise().sum();
    if (g.needs_grad(ix)) {
      const Mat dxhat = go.array().rowwise() * g.value(ig).row(0).array();
      Mat& gx = g.grad(ix);
      for (Eigen::Index r = 0; r < go.rows(); ++r) {
        const double m1 = dxhat.row(r).mean();
        const double m2 = dxhat.row(r).cwiseProduct(xhat->row(r)).mean();
        gx.row(r).array() +=
            (*inv_std)(r) * (dxhat.row(r).array() - m1 - xhat->row(r).array() * m2);
      }
    }
  });
}

Var attention(Var q, Var k, Var v, int heads) {
  Graph& g = graph_of(q);
  const Mat& qv = q.value();
  const Mat& kv = k.value();
  const Mat& vv = v.value();
  const Eigen::Index D = qv.cols();
  if (kv.cols() != D || vv.cols() != D || kv.rows() != vv.rows() || D % heads != 0)
    throw ShapeError("attention: incompatible shapes");
  const Eigen::Index dh = D / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  auto probs = std::make_shared<std::vector<Mat>>(heads);
  Mat out(qv.rows(), D);
  for (int h = 0; h < heads; ++h) {
    Mat scores(qv.rows(), kv.rows());
    scores.noalias() = qv.middleCols(h * dh, dh) * kv.middleCols(h * dh, dh).transpose();
    scores *= inv_sqrt;
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
      const double m = scores.row(r).maxCoeff();
      scores.row(r) = (scores.row(r).array() - m).exp();
      scores.row(r) /= scores.row(r).sum();
    }
    out.middleCols(h * dh, dh).noalias() = scores * vv.middleCols(h * dh, dh);
    (*probs)[h] = std::move(scores);
  }
  const int iq = q.id(), ik = k.id(), iv = v.id();
  const bool needs = q.needs_grad() || k.needs_grad() || v.needs_grad();
  return g.record(std::move(out), needs, [iq, ik, iv, heads, dh, inv_sqrt, probs](Graph& g, int self) {
    const Mat& go = g.grad(self);
    for (int h = 0; h < heads; ++h) {
      const Mat& P = (*probs)[h];
      const auto dout = go.middleCols(h * dh, dh);
      if (g.needs_grad(iv)) g.grad(iv).middleCols(h * dh, dh).noalias() += P.transpose() * dout;
      if (!g.needs_grad(iq) && !g.needs_grad(ik)) continue;
      Mat dP(P.rows(), P.cols());
      dP.noalias() = dout * g.value(iv).middleCols(h * dh, dh).transpose();
      const Eigen::VectorXd rowdot = dP.cwiseProduct(P).rowwise().sum();
      Mat dS = P.cwiseProduct(dP.colwise() - rowdot);
      dS *= inv_sqrt;
      if (g.needs_grad(iq))
        g.grad(iq).middleCols(h * dh, dh).noalias() += dS * g.value(ik).middleCols(h * dh, dh);
      if (g.needs_grad(ik))
        g.grad(ik).middleCols(h * dh, dh).noalias() +=
            dS.transpose() * g.value(iq).middleCols(h * dh, dh);
    }
  });
}

Var l2_normalize_rows(Var x, double eps) {
  Graph& g = graph_of(x);
  const Mat& xv = x.value();
  auto norms = std::make_shared<Eigen::VectorXd>(
      (xv.rowwise().squaredNorm().array() + eps).sqrt().matrix());
  Mat out = xv.array().colwise() / norms->array();
  const int ix = x.id();
  return g.record(std::move(out), x.needs_grad(), [ix, norms](Graph& g, int self) {
    const Mat& y = g.value(self);
    const Mat& go = g.grad(self);
    const Eigen::VectorXd dots = go.cwiseProduct(y).rowwise().sum();
    const Mat d = go - (y.array().colwise() * dots.array()).matrix();
    g.grad(ix) += (d.array().colwise() / norms->array()).matrix();
  });
}

Var softmax_rows(Var x) {
  Graph& g = graph_of(x);
  Mat out = x.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  const int ix = x.id();
  return g.record(std::move(out), x.needs_grad(), [ix](Graph& g, int self) {
    const Mat& y = g.value(self);
    const Mat& go = g.grad(self);
    const Eigen::VectorXd dots = go.cwiseProduct(y).rowwise().sum();
    g.grad(ix) += y.cwiseProduct(go.colwise() - dots);
  });
}

Var straight_through(Var x, Mat value) {
  Graph& g = graph_of(x);
  require_same_shape(x.value(), value, "straight_through");
  const int ix = x.id();
  return g.record(std::move(value), x.needs_grad(),
                  [ix](Graph& g, int self) { g.grad(ix) += g.grad(self); });
}

Var sparse_linear(std::span<const std::pair<int, double>> input, Var weight, Var bias) {
  Graph& g = graph_of(weight);
  const Mat& w = weight.value();
  if (bias.value().rows() != 1 || bias.value().cols() != w.cols())
    throw ShapeError("sparse_linear: bias shape mismatch");
  Mat out = bias.value();
  std::vector<std::pair<int, double>> entries(input.begin(), input.end());
  for (const auto& [i, a] : entries) {
    if (i < 0 || i >= w.rows()) throw ShapeError("sparse_linear: index out of range");
    out.row(0) += a * w.row(i);
  }
  const int iw = weight.id(), ib = bias.id();
  return g.record(std::move(out), weight.needs_grad() || bias.needs_grad(),
                  [iw, ib, entries](Graph& g, int self) {
                    const Mat& go = g.grad(self);
                    if (g.needs_grad(ib)) g.grad(ib) += go;
                    if (g.needs_grad(iw))
                      for (const auto& [i, a] : entries) g.grad(iw).row(i) += a * go.row(0);
                  });
}

Var custom(Var x, Mat value, std::function<Mat(const Mat&)> vjp) {
  Graph& g = graph_of(x);
  const int ix = x.id();
  return g.record(std::move(value), x.needs_grad(),
                  [ix, vjp = std::move(vjp)](Graph& g, int self) {
                    g.grad(ix) += vjp(g.grad(self));
                  });
}

Var sum(Var x) {
  Graph& g = graph_of(x);
  Mat out(1, 1);
  out(0, 0) = x.value().sum();
  const int ix = x.id();
  return g.record(std::move(out), x.needs_grad(), [ix](Graph& g, int self) {
    g.grad(ix).array() += g.grad(self)(0, 0);
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var mse(Var x, const Mat& target) {
  Graph& g = graph_of(x);
  require_same_shape(x.value(), target, "mse");
  const double n = static_cast<double>(target.size());
  auto diff = std::make_shared<Mat>(x.value() - target);
  Mat out(1, 1);
  out(0, 0) = diff->squaredNorm() / n;
  const int ix = x.id();
  return g.record(std::move(out), x.needs_grad(), [ix, diff, n](Graph& g, int self) {
    g.grad(ix) += (2.0 * g.grad(self)(0, 0) / n) * *diff;
  });
}

Var mse(Var a, Var b) { return mean(mul(sub(a, b), sub(a, b))); }

Var weighted_mse(Var x, const Mat& target, const Mat& weight) {
  Graph& g = graph_of(x);
  require_same_shape(x.value(), target, "weighted_mse");
  require_same_shape(x.value(), weight, "weighted_mse");
  const double wsum = weight.sum();
  // Target entries with zero weight are never read (they may be NaN).
  auto diff = std::make_shared<Mat>(Mat::Zero(target.rows(), target.cols()));
  for (Eigen::Index i = 0; i < target.size(); ++i)
    if (weight.data()[i] != 0.0) diff->data()[i] = x.value().data()[i] - target.data()[i];
  Mat out(1, 1);
  out(0, 0) = wsum > 0.0 ? diff->cwiseProduct(*diff).cwiseProduct(weight).sum() / wsum : 0.0;
  const int ix = x.id();
  auto w = std::make_shared<Mat>(weight);
  return g.record(std::move(out), x.needs_grad() && wsum > 0.0,
                  [ix, diff, w, wsum](Graph& g, int self) {
                    g.grad(ix) += (2.0 * g.grad(self)(0, 0) / wsum) * diff->cwiseProduct(*w);
                  });
}

Var cross_entropy(Var logits, std::span<const int> targets) {
  Graph& g = graph_of(logits);
  const Mat& z = logits.value();
  if (static_cast<Eigen::Index>(targets.size()) != z.rows())
    throw ShapeError("cross_entropy: one target per row required");
  auto probs = std::make_shared<Mat>(z.rows(), z.cols());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const int t = targets[r];
    if (t < 0 || t >= z.cols()) throw ShapeError("cross_entropy: target out of range");
    const double m = z.row(r).maxCoeff();
    const double lse = m + std::log((z.row(r).array() - m).exp().sum());
    loss += lse - z(r, t);
    probs->row(r) = (z.row(r).array() - lse).exp();
  }
  const double n = static_cast<double>(z.rows());
  Mat out(1, 1);
  out(0, 0) = loss / n;
  std::vector<int> tg(targets.begin(), targets.end());
  const int iz = logits.id();
  return g.record(std::move(out), logits.needs_grad(), [iz, probs, tg, n](Graph& g, int self) {
    Mat d = *probs;
    for (std::size_t r = 0; r < tg.size(); ++r) d(static_cast<Eigen::Index>(r), tg[r]) -= 1.0;
    g.grad(iz) += (g.grad(self)(0, 0) / n) * d;
  });
}

}  // namespace tlc::nn
