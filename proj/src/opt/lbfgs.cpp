// SPDX-License-Identifier: Apache-2.0
#include "tlc/opt/lbfgs.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>

#include "tlc/common/error.hpp"

namespace tlc::opt {

using Eigen::VectorXd;
using nlohmann::json;

void OptimizeConfig::validate() const {
  if (!(tolerance > 0.0)) throw ConfigError("tolerance must be positive");
  if (max_iterations < 1) throw ConfigError("max_iterations must be at least 1");
  if (!(step_size > 0.0)) throw ConfigError("step_size must be positive");
  if (history_size < 1) throw ConfigError("history_size must be at least 1");
  if (max_line_search < 1) throw ConfigError("max_line_search must be at least 1");
}

json OptimizeConfig::to_json() const {
  return {{"step_size", step_size},
          {"tolerance", tolerance},
          {"max_iterations", max_iterations},
          {"history_size", history_size},
          {"max_line_search", max_line_search}};
}

OptimizeConfig OptimizeConfig::from_json(const json& j) {
  OptimizeConfig c;
  c.step_size = j.value("step_size", c.step_size);
  c.tolerance = j.value("tolerance", c.tolerance);
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  c.history_size = j.value("history_size", c.history_size);
  c.max_line_search = j.value("max_line_search", c.max_line_search);
  c.validate();
  return c;
}

namespace {

constexpr double kC1 = 1e-4;
constexpr double kC2 = 0.9;
constexpr double kStepTolerance = 1e-12;

double max_norm(const VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Minimizer of the cubic matching (x1, f1, g1) and (x2, f2, g2), clamped to bounds.
double cubic_interpolate(double x1, double f1, double g1, double x2, double f2, double g2,
                         double lo, double hi) {
  const double d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
  const double d2_square = d1 * d1 - g1 * g2;
  if (d2_square >= 0.0 && std::isfinite(d2_square)) {
    const double d2 = std::sqrt(d2_square);
    const double pos = x1 <= x2 ? x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
                                : x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2));
    if (std::isfinite(pos)) return std::clamp(pos, lo, hi);
  }
  return 0.5 * (lo + hi);
}

struct Probe {
  double t = 0.0;
  double f = 0.0;
  VectorXd g;
  double gtd = 0.0;
};

struct LineSearch {
  Probe best;
  int evaluations = 0;
};

LineSearch strong_wolfe(const Objective& fn, const VectorXd& x, const VectorXd& d, double t,
                        const Probe& start, int max_ls) {
  LineSearch out;
  const double d_norm = max_norm(d);
  auto probe = [&](double step) {
    Probe p;
    p.t = step;
    p.f = fn(x + step * d, p.g);
    p.gtd = p.g.dot(d);
    ++out.evaluations;
    return p;
  };

  Probe prev = start;
  Probe cur = probe(t);
  int iter = 0;
  bool done = false;
  std::array<Probe, 2> bracket;
  bool have_bracket = false;
  while (iter < max_ls) {
    if (!std::isfinite(cur.f) || cur.f > start.f + kC1 * cur.t * start.gtd ||
        (iter > 1 && cur.f >= prev.f)) {
      bracket = {prev, cur};
      have_bracket = true;
      break;
    }
    if (std::abs(cur.gtd) <= -kC2 * start.gtd) {
      out.best = cur;
      done = true;
      break;
    }
    if (cur.gtd >= 0.0) {
      bracket = {prev, cur};
      have_bracket = true;
      break;
    }
    const double lo = cur.t + 0.01 * (cur.t - prev.t);
    const double hi = cur.t * 10.0;
    const double next = cubic_interpolate(prev.t, prev.f, prev.gtd, cur.t, cur.f, cur.gtd, lo, hi);
    prev = cur;
    cur = probe(next);
    ++iter;
  }
  if (done) return out;
  if (!have_bracket) bracket = {start, cur};

  int low = bracket[0].f <= bracket[1].f ? 0 : 1;
  bool insufficient_progress = false;
  while (iter < max_ls) {
    const double a = bracket[0].t, b = bracket[1].t;
    if (std::abs(b - a) * d_norm < kStepTolerance) break;
    const double lo = std::min(a, b), hi = std::max(a, b);
    double step = cubic_interpolate(bracket[0].t, bracket[0].f, bracket[0].gtd, bracket[1].t,
                                    bracket[1].f, bracket[1].gtd, lo, hi);
    const double eps = 0.1 * (hi - lo);
    if (std::min(hi - step, step - lo) < eps) {
      if (insufficient_progress || step >= hi || step <= lo) {
        step = std::abs(step - hi) < std::abs(step - lo) ? hi - eps : lo + eps;
        insufficient_progress = false;
      } else {
        insufficient_progress = true;
      }
    } else {
      insufficient_progress = false;
    }
    Probe p = probe(step);
    ++iter;
    const int high = 1 - low;
    if (!std::isfinite(p.f) || p.f > start.f + kC1 * p.t * start.gtd || p.f >= bracket[low].f) {
      bracket[high] = std::move(p);
    } else {
      if (std::abs(p.gtd) <= -kC2 * start.gtd) {
        out.best = std::move(p);
        return out;
      }
      if (p.gtd * (bracket[high].t - bracket[low].t) >= 0.0) bracket[high] = bracket[low];
      bracket[low] = std::move(p);
    }
    low = bracket[0].f <= bracket[1].f ? 0 : 1;
  }
  out.best = bracket[low];
  return out;
}

}  // namespace

LbfgsResult minimize_lbfgs(const Objective& fn, VectorXd x0, const OptimizeConfig& config,
                           const IterationCallback& on_iteration) {
  config.validate();
  LbfgsResult result;
  VectorXd x = std::move(x0);
  VectorXd g;
  double f = fn(x, g);
  result.evaluations = 1;
  if (!std::isfinite(f)) throw InputError("objective is not finite at the starting point");
  result.x = x;
  result.objective = f;
  result.objective_trace.push_back(f);
  result.grad_norm_trace.push_back(max_norm(g));
  if (max_norm(g) <= config.tolerance) {
    result.converged = true;
    return result;
  }

  std::deque<VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  double h_diag = 1.0;
  VectorXd d = -g;
  VectorXd g_prev;
  VectorXd s_prev;
  std::vector<double> alpha;
  for (int iter = 0; iter < config.max_iterations; ++iter) {
    if (iter > 0) {
      const VectorXd y = g - g_prev;
      const double ys = y.dot(s_prev);
      if (ys > 1e-10) {
        if (static_cast<int>(s_hist.size()) == config.history_size) {
          s_hist.pop_front();
          y_hist.pop_front();
          rho_hist.pop_front();
        }
        s_hist.push_back(s_prev);
        y_hist.push_back(y);
        rho_hist.push_back(1.0 / ys);
        h_diag = ys / y.squaredNorm();
      }
      // Two-loop recursion.
      VectorXd q = -g;
      const int m = static_cast<int>(s_hist.size());
      alpha.assign(m, 0.0);
      for (int i = m - 1; i >= 0; --i) {
        alpha[i] = rho_hist[i] * s_hist[i].dot(q);
        q -= alpha[i] * y_hist[i];
      }
      d = q * h_diag;
      for (int i = 0; i < m; ++i) {
        const double beta = rho_hist[i] * y_hist[i].dot(d);
        d += (alpha[i] - beta) * s_hist[i];
      }
    }
    double gtd = g.dot(d);
    if (!(gtd < 0.0)) {
      // Not a descent direction: restart from steepest descent.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      h_diag = 1.0;
      d = -g;
      gtd = g.dot(d);
    }
    const double t0 =
        iter == 0 ? std::min(1.0, 1.0 / g.cwiseAbs().sum()) * config.step_size : config.step_size;
    Probe start{0.0, f, g, gtd};
    const LineSearch ls = strong_wolfe(fn, x, d, t0, start, config.max_line_search);
    result.evaluations += ls.evaluations;
    if (!std::isfinite(ls.best.f) || !(ls.best.f < f)) {
      result.converged = false;
      return result;
    }
    g_prev = g;
    s_prev = ls.best.t * d;
    x += s_prev;
    const double f_prev = f;
    f = ls.best.f;
    g = ls.best.g;
    ++result.iterations;
    result.x = x;
    result.objective = f;
    result.objective_trace.push_back(f);
    result.grad_norm_trace.push_back(max_norm(g));
    if (on_iteration && !on_iteration({result.iterations, f, max_norm(g)})) {
      result.cancelled = true;
      return result;
    }
    if (max_norm(g) <= config.tolerance ||
        (f_prev - f) <= config.tolerance * std::max(std::abs(f_prev), 1e-300)) {
      result.converged = true;
      return result;
    }
  }
  return result;
}

json trace_to_json(const LbfgsResult& r) {
  return {{"objective", r.objective_trace},
          {"grad_norm", r.grad_norm_trace},
          {"iterations", r.iterations},
          {"converged", r.converged}};
}

}  // namespace tlc::opt
