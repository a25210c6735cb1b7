/*=============================================================================
 * Limited-memory BFGS with a strong Wolfe line search (bracket + zoom,
 * quadratic interpolation). Memory 10 by default; the objective functor
 * returns the value and fills the gradient in one call.
 *===========================================================================*/
#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <vector>

#include "types.hpp"

namespace maskforge {

struct LbfgsOptions {
  int memory = 10;
  int max_iters = 200;
  double grad_tol = 1e-8;  // stop when ||grad||_inf <= grad_tol
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.9;
  int max_line_iters = 40;
};

struct LbfgsReport {
  int iters = 0;
  double value = 0.0;
  double grad_inf = 0.0;
  bool converged = false;
  std::vector<double> value_trace;
};

namespace detail {

/* Strong Wolfe line search. fg(x, grad) -> value. Returns the accepted
 * step and updates (x, f, grad) in place; step 0 means no acceptable point
 * was found. */
template <class F>
double wolfe_line_search(F&& fg, Vec& x, double& f, Vec& grad, const Vec& dir,
                         const LbfgsOptions& opt) {
  const double f0 = f;
  const double d0 = grad.dot(dir);
  if (d0 >= 0.0) return 0.0;  // not a descent direction

  const Vec x0 = x;
  auto eval = [&](double a, double& fa, double& da, Vec& ga) {
    x = x0 + a * dir;
    fa = fg(x, ga);
    da = ga.dot(dir);
  };

  double a_prev = 0.0, f_prev = f0, d_prev = d0;
  double a = 1.0;
  double a_lo = 0.0, a_hi = 0.0, f_lo = f0, f_hi = f0, d_lo = d0;
  bool bracketed = false;
  Vec g_trial(x.size());
  double f_trial = 0.0, d_trial = 0.0;

  for (int it = 0; it < opt.max_line_iters && !bracketed; ++it) {
    eval(a, f_trial, d_trial, g_trial);
    if (f_trial > f0 + opt.wolfe_c1 * a * d0 || (it > 0 && f_trial >= f_prev)) {
      a_lo = a_prev; f_lo = f_prev; d_lo = d_prev;
      a_hi = a; f_hi = f_trial;
      bracketed = true;
      break;
    }
    if (std::abs(d_trial) <= -opt.wolfe_c2 * d0) {
      f = f_trial;
      grad = std::move(g_trial);
      return a;  // strong Wolfe satisfied
    }
    if (d_trial >= 0.0) {
      a_lo = a; f_lo = f_trial; d_lo = d_trial;
      a_hi = a_prev; f_hi = f_prev;
      bracketed = true;
      break;
    }
    a_prev = a; f_prev = f_trial; d_prev = d_trial;
    a *= 2.0;
  }
  if (!bracketed) {
    x = x0;
    return 0.0;
  }

  for (int it = 0; it < opt.max_line_iters; ++it) {
    // Quadratic interpolation on [a_lo, a_hi], safeguarded by bisection.
    double a_mid = a_lo + 0.5 * (a_hi - a_lo);
    const double denom = 2.0 * (f_hi - f_lo - d_lo * (a_hi - a_lo));
    if (std::abs(denom) > 1e-300) {
      const double a_quad = a_lo - d_lo * (a_hi - a_lo) * (a_hi - a_lo) / denom;
      const double lo = std::min(a_lo, a_hi), hi = std::max(a_lo, a_hi);
      const double margin = 0.1 * (hi - lo);
      if (std::isfinite(a_quad) && a_quad > lo + margin && a_quad < hi - margin)
        a_mid = a_quad;
    }
    eval(a_mid, f_trial, d_trial, g_trial);
    if (f_trial > f0 + opt.wolfe_c1 * a_mid * d0 || f_trial >= f_lo) {
      a_hi = a_mid; f_hi = f_trial;
    } else {
      if (std::abs(d_trial) <= -opt.wolfe_c2 * d0) {
        f = f_trial;
        grad = std::move(g_trial);
        return a_mid;
      }
      if (d_trial * (a_hi - a_lo) >= 0.0) { a_hi = a_lo; f_hi = f_lo; }
      a_lo = a_mid; f_lo = f_trial; d_lo = d_trial;
    }
    if (std::abs(a_hi - a_lo) < 1e-14) break;
  }

  // Accept the best sufficient-decrease point even without curvature.
  if (f_lo < f0 && a_lo > 0.0) {
    eval(a_lo, f_trial, d_trial, g_trial);
    f = f_trial;
    grad = std::move(g_trial);
    return a_lo;
  }
  x = x0;
  return 0.0;
}

}  // namespace detail

/* Minimizes fg(x, grad) -> value starting from x (updated in place). */
template <class F>
LbfgsReport lbfgs_minimize(F&& fg, Vec& x, const LbfgsOptions& opt = {}) {
  LbfgsReport rep;
  Vec grad(x.size());
  double f = fg(x, grad);
  rep.value_trace.push_back(f);

  std::deque<Vec> s_hist, y_hist;
  std::deque<double> rho_hist;
  Vec q(x.size()), dir(x.size());
  std::vector<double> alpha_buf;

  for (int iter = 0; iter < opt.max_iters; ++iter) {
    rep.grad_inf = grad.lpNorm<Eigen::Infinity>();
    if (rep.grad_inf <= opt.grad_tol) {
      rep.converged = true;
      break;
    }

    // Two-loop recursion.
    q = grad;
    alpha_buf.assign(s_hist.size(), 0.0);
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha_buf[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha_buf[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      const double gamma =
          s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      q *= gamma;
    }
    for (size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha_buf[i] - beta) * s_hist[i];
    }
    dir = -q;

    const Vec x_old = x;
    const Vec g_old = grad;
    const double step = detail::wolfe_line_search(fg, x, f, grad, dir, opt);
    if (step == 0.0) break;  // line search gave up; x unchanged

    Vec s = x - x_old;
    Vec y = grad - g_old;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opt.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    rep.iters = iter + 1;
    rep.value_trace.push_back(f);
  }
  rep.value = f;
  rep.grad_inf = grad.lpNorm<Eigen::Infinity>();
  return rep;
}

}  // namespace maskforge
