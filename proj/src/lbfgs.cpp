#include "smm/lbfgs.hpp"

#include <cmath>
#include <deque>

#include "smm/error.hpp"

namespace smm {

void OptimizerConfig::validate() const {
  if (memory < 1) throw InvalidArgument("optimizer memory must be at least 1");
  if (!(grad_tol > 0.0)) throw InvalidArgument("optimizer grad_tol must be positive");
  if (max_iters < 0) throw InvalidArgument("optimizer max_iters must be nonnegative");
  if (!(armijo > 0.0 && armijo < 1.0)) throw InvalidArgument("Armijo constant must lie in (0, 1)");
  if (!(shrink > 0.0 && shrink < 1.0)) throw InvalidArgument("line-search shrink factor must lie in (0, 1)");
  if (max_backtracks < 1) throw InvalidArgument("max_backtracks must be at least 1");
}

std::string to_string(OptimizerStatus s) {
  switch (s) {
    case OptimizerStatus::converged:
      return "converged";
    case OptimizerStatus::max_iters:
      return "max_iters";
    case OptimizerStatus::line_search_failed:
      return "line_search_failed";
    case OptimizerStatus::non_finite:
      return "non_finite";
  }
  return "unknown";
}

namespace {

struct Pair {
  Eigen::VectorXd s, y;
  double rho;
};

Eigen::VectorXd two_loop(const std::deque<Pair>& mem, const Eigen::VectorXd& g) {
  Eigen::VectorXd q = g;
  std::vector<double> alpha(mem.size());
  for (std::size_t k = mem.size(); k-- > 0;) {
    alpha[k] = mem[k].rho * mem[k].s.dot(q);
    q -= alpha[k] * mem[k].y;
  }
  if (!mem.empty()) {
    const Pair& last = mem.back();
    q *= last.s.dot(last.y) / last.y.squaredNorm();
  }
  for (std::size_t k = 0; k < mem.size(); ++k) {
    const double beta = mem[k].rho * mem[k].y.dot(q);
    q += (alpha[k] - beta) * mem[k].s;
  }
  return -q;
}

}  // namespace

OptimizerResult lbfgs_minimize(const Objective& f, Eigen::VectorXd x0, const OptimizerConfig& cfg) {
  cfg.validate();
  OptimizerResult res;
  Eigen::VectorXd g(x0.size());
  double fx = f(x0, g);
  res.evaluations = 1;
  res.theta = x0;
  res.value = fx;
  if (!std::isfinite(fx) || !g.allFinite()) {
    res.status = OptimizerStatus::non_finite;
    res.grad_norm = g.norm();
    return res;
  }
  res.trace.push_back(fx);

  std::deque<Pair> mem;
  Eigen::VectorXd x = std::move(x0);
  Eigen::VectorXd x_new(x.size()), g_new(x.size());
  res.status = OptimizerStatus::max_iters;
  for (int it = 0;; ++it) {
    res.grad_norm = g.norm();
    if (res.grad_norm <= cfg.grad_tol) {
      res.status = OptimizerStatus::converged;
      break;
    }
    if (it >= cfg.max_iters) break;

    Eigen::VectorXd d = two_loop(mem, g);
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      mem.clear();
      d = -g;
      slope = -g.squaredNorm();
    }
    // First step (no curvature information yet) is scaled to unit length.
    double step = mem.empty() ? std::min(1.0, 1.0 / d.norm()) : 1.0;

    bool accepted = false;
    double f_new = 0.0;
    for (int bt = 0; bt < cfg.max_backtracks; ++bt) {
      x_new = x + step * d;
      f_new = f(x_new, g_new);
      ++res.evaluations;
      if (std::isfinite(f_new) && f_new <= fx + cfg.armijo * step * slope) {
        accepted = true;
        break;
      }
      step *= cfg.shrink;
    }
    if (!accepted) {
      if (!mem.empty()) {
        // Retry once from steepest descent before giving up.
        mem.clear();
        --it;
        continue;
      }
      res.status = OptimizerStatus::line_search_failed;
      break;
    }
    if (!g_new.allFinite()) {
      res.status = OptimizerStatus::non_finite;
      break;
    }

    Pair p{x_new - x, g_new - g, 0.0};
    const double sy = p.s.dot(p.y);
    if (sy > 1e-12 * p.s.norm() * p.y.norm() && sy > 0.0) {
      p.rho = 1.0 / sy;
      mem.push_back(std::move(p));
      if (static_cast<int>(mem.size()) > cfg.memory) mem.pop_front();
    }
    x.swap(x_new);
    g.swap(g_new);
    fx = f_new;
    res.trace.push_back(fx);
    res.iterations = it + 1;
  }
  res.theta = x;
  res.value = fx;
  res.grad_norm = g.norm();
  return res;
}

}  // namespace smm
