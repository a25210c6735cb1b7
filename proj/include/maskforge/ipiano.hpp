/*=============================================================================
 * Inertial proximal gradient solver (iPiano) on the reduced problem
 *
 *     min_c F(c) + G(c),   F(c) = 1/2 ||u(c) - g||^2,
 *
 * where u(c) is the lower-level reconstruction. For the linear models
 * u = A(c)^{-1} C g and the gradient is analytic,
 *
 *     grad F(c) = diag(g - u + G u) A^{-T} (u - g),
 *
 * one solve and one transpose solve per evaluation. For smoothed TV the
 * gradient comes from implicit differentiation of T(u, c) = 0,
 *
 *     grad F(c) = -D_c(u*, c) D_u(u*, c)^{-1} (u* - g),
 *
 * so the lower-level Newton solve runs at tight tolerance.
 *
 * Each iteration backtracks the Lipschitz estimate l_n = eta^i l_{n-1}
 * until the descent inequality
 *
 *     F(c+) <= F(c) + <grad F(c), c+ - c> + l_n/2 ||c+ - c||^2
 *
 * holds at the beta = 0 trial point, then takes the inertial step
 *
 *     c_{n+1} = prox_{alpha_n G}(c_n - alpha_n grad F(c_n) + beta (c_n - c_{n-1}))
 *
 * with alpha_n = 1.99 (1 - beta) / l_n. A successful line search relaxes
 * l_n by the divisor 1.02 for the next iteration.
 *===========================================================================*/
#pragma once

#include <algorithm>
#include <vector>

#include "lower_level.hpp"

namespace maskforge {

struct IpianoParams {
  double lambda = 0.01;
  double beta = 0.75;        // inertia
  double l_init = 1.0;       // initial Lipschitz estimate
  double eta = 1.2;          // backtracking growth
  double relax = 1.02;       // Lipschitz relaxation divisor after success
  double alpha_scale = 1.99; // alpha_n = alpha_scale (1 - beta) / l_n
  int max_iters = 700;
  double step_tol = 1e-6;    // stop when ||c_{n+1} - c_n||_inf <= step_tol
  int max_backtracks = 60;
  double tv_newton_tol = 1e-11;

  static IpianoParams defaults_for(const Model& model, double lambda) {
    IpianoParams p;
    p.lambda = lambda;
    switch (model.kind) {
      case ModelKind::Harmonic: p.max_iters = 700; break;
      case ModelKind::Biharmonic: p.max_iters = 3500; break;
      case ModelKind::SmoothedTV: p.max_iters = 1000; break;
    }
    return p;
  }
};

/* Reduced objective for harmonic/biharmonic. Holds a pattern-reusing LU of
 * A(c); one factorization per evaluation, a transpose solve only when the
 * gradient is requested. */
class LinearReducedObjective {
 public:
  LinearReducedObjective(const GridOperators& ops, const Vec& g, ModelKind kind)
      : g_op_(&ops.smoothing_operator(kind)), g_(g) {}

  /* F(c); the reconstruction is kept for last_u(). An all-zero mask falls
   * back to the best constant reconstruction (A is singular there). */
  double value(const Vec& c) {
    if (zero_mask(c)) {
      u_ = Vec::Constant(g_.size(), g_.mean());
      factorized_ = false;
    } else {
      lu_.factorize(inpaint_matrix(*g_op_, c));
      factorized_ = true;
      u_ = lu_.solve(c.cwiseProduct(g_));
    }
    return 0.5 * (u_ - g_).squaredNorm();
  }

  double value_and_gradient(const Vec& c, Vec& grad) {
    const double f = value(c);
    if (!factorized_) {
      grad = Vec::Zero(c.size());
      return f;
    }
    const Vec w = lu_.solve_transpose(u_ - g_);
    grad = (g_ - u_ + Vec(*g_op_ * u_)).cwiseProduct(w);
    return f;
  }

  const Vec& last_u() const { return u_; }

 private:
  const SpMat* g_op_;
  Vec g_;
  RefactorLu lu_;
  Vec u_;
  bool factorized_ = false;
};

/* Reduced objective for smoothed TV, with the implicitly differentiated
 * gradient. Newton warm-starts from the previous reconstruction. */
class TvReducedObjective {
 public:
  TvReducedObjective(const GridOperators& ops, const Vec& g, double eps,
                     double newton_tol = 1e-11)
      : ops_(&ops), g_(g), eps_(eps), newton_tol_(newton_tol) {}

  double value(const Vec& c) {
    if (zero_mask(c)) {
      u_ = Vec::Constant(g_.size(), g_.mean());
      solved_ = false;
    } else {
      u_ = inpaint_tv(*ops_, c, g_, eps_, newton_tol_, 100,
                      u_.size() ? &u_ : nullptr);
      solved_ = true;
    }
    return 0.5 * (u_ - g_).squaredNorm();
  }

  double value_and_gradient(const Vec& c, Vec& grad) {
    const double f = value(c);
    if (!solved_) {
      grad = Vec::Zero(c.size());
      return f;
    }
    ldlt_.factorize(tv_hessian(*ops_, u_, c, eps_));
    const Vec w = ldlt_.solve(u_ - g_);
    const Vec dc = (u_ - g_).array() / (1.0 - c.array()).square();
    grad = -dc.cwiseProduct(w);
    return f;
  }

  const Vec& last_u() const { return u_; }

 private:
  const GridOperators* ops_;
  Vec g_;
  double eps_;
  double newton_tol_;
  RefactorLdlt ldlt_;
  Vec u_;
  bool solved_ = false;
};

/* One-shot reduced objective evaluations. */
inline std::pair<double, Vec> reduced_objective_linear(const GridOperators& ops,
                                                       const Vec& c, const Vec& g,
                                                       ModelKind kind) {
  LinearReducedObjective obj(ops, g, kind);
  Vec grad;
  const double f = obj.value_and_gradient(c, grad);
  return {f, std::move(grad)};
}

inline std::pair<double, Vec> reduced_objective_tv(const GridOperators& ops,
                                                   const Vec& c, const Vec& g,
                                                   double eps,
                                                   double newton_tol = 1e-11) {
  TvReducedObjective obj(ops, g, eps, newton_tol);
  Vec grad;
  const double f = obj.value_and_gradient(c, grad);
  return {f, std::move(grad)};
}

struct IpianoStep {
  double f = 0.0;          // F(c_n)
  double f_trial = 0.0;    // F at the accepted beta = 0 trial point
  double inequality_margin = 0.0;  // rhs - lhs of the descent check, >= 0
  double lipschitz = 0.0;  // accepted l_n
  int backtracks = 0;
  double step_inf = 0.0;   // ||c_{n+1} - c_n||_inf (inertial step)
};

struct IpianoResult {
  MaskField mask;
  Vec u;  // exact lower-level reconstruction at the final mask
  std::vector<double> energy_trace;  // F + lambda ||c||_1 per iteration
  std::vector<IpianoStep> steps;
  int iters = 0;
  bool converged = false;
};

namespace detail {

template <class Objective, class Prox>
IpianoResult ipiano_core(Objective& obj, Prox&& prox, Vec c0,
                         const IpianoParams& params) {
  const double l_floor = params.l_init * 1e-6;
  const double l_cap = 1e12;

  IpianoResult out;
  Vec c = std::move(c0);
  Vec c_prev = c;
  Vec grad(c.size()), trial(c.size()), next(c.size());
  double l = params.l_init;

  for (int n = 0; n < params.max_iters; ++n) {
    const double f = obj.value_and_gradient(c, grad);
    out.energy_trace.push_back(f + params.lambda * c.lpNorm<1>());

    IpianoStep step;
    step.f = f;

    // Backtrack l_n = eta^i l_{n-1} until the descent inequality holds at
    // the beta = 0 trial point.
    bool accepted = false;
    double f_trial = 0.0, rhs = 0.0, alpha = 0.0;
    for (int i = 0; i <= params.max_backtracks; ++i) {
      if (l > l_cap)
        throw std::logic_error("ipiano: Lipschitz estimate exceeded guard rail");
      alpha = params.alpha_scale * (1.0 - params.beta) / l;
      trial = prox(Vec(c - alpha * grad), alpha);
      f_trial = obj.value(trial);
      const Vec d = trial - c;
      rhs = f + grad.dot(d) + 0.5 * l * d.squaredNorm();
      if (std::isfinite(f_trial) && f_trial <= rhs) {
        accepted = true;
        step.backtracks = i;
        break;
      }
      l *= params.eta;
    }
    if (!accepted)
      throw LineSearchStallError("ipiano: line search exceeded backtracking budget");

    step.f_trial = f_trial;
    step.inequality_margin = rhs - f_trial;
    step.lipschitz = l;

    // Inertial step with the accepted l_n.
    next = prox(Vec(c - alpha * grad + params.beta * (c - c_prev)), alpha);
    step.step_inf = (next - c).lpNorm<Eigen::Infinity>();
    out.steps.push_back(step);

    c_prev = c;
    c = next;
    out.iters = n + 1;

    l = std::max(l / params.relax, l_floor);

    if (step.step_inf <= params.step_tol) {
      out.converged = true;
      break;
    }
  }

  out.energy_trace.push_back(obj.value(c) + params.lambda * c.lpNorm<1>());
  out.u = obj.last_u();
  out.mask = MaskField(std::move(c));
  return out;
}

}  // namespace detail

/* Runs iPiano on the reduced problem; c starts at 1 (clamped to c_max for
 * TV, whose prox also adds the projection onto [0, c_max]). */
inline IpianoResult ipiano_run(const GridOperators& ops, const Image& g,
                               const IpianoParams& params, const Model& model) {
  const Eigen::Index n = g.data.size();
  if (model.is_linear()) {
    LinearReducedObjective obj(ops, g.data, model.kind);
    const double lambda = params.lambda;
    auto prox = [lambda](const Vec& x, double alpha) {
      Vec y(x.size());
      for (Eigen::Index i = 0; i < x.size(); ++i) y[i] = shrink(x[i], alpha * lambda);
      return y;
    };
    return detail::ipiano_core(obj, prox, Vec(Vec::Ones(n)), params);
  }
  TvReducedObjective obj(ops, g.data, model.eps, params.tv_newton_tol);
  const double lambda = params.lambda;
  auto prox = [lambda](const Vec& x, double alpha) {
    Vec y(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i)
      y[i] = std::clamp(x[i] - alpha * lambda, 0.0, kCMax);
    return y;
  };
  return detail::ipiano_core(obj, prox, Vec(Vec::Constant(n, kCMax)), params);
}

}  // namespace maskforge
