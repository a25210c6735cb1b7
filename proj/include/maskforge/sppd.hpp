/*=============================================================================
 * Successive Preconditioning Primal-Dual solver for the bi-level mask
 * optimization problem.
 *
 * Each outer iteration linearizes the lower-level optimality conditions
 * T(u, c) = 0 around a feasible point (u_hat, c_hat), giving the constraint
 *
 *     D_u u + D_c c + q = 0,   q = -D_u u_hat - D_c c_hat,
 *
 * and solves the resulting saddle-point problem
 *
 *     max_p min_{u,c} <K (u; c) + q, p> + 1/2||u - g||^2 + lambda ||c||_1
 *            + mu1/2 ||c - c_hat||^2 + mu2/2 ||u - u_hat||^2 (+ i_C(c), TV)
 *
 * with K = (D_u, D_c), by the diagonally preconditioned primal-dual
 * iteration
 *
 *     p   <- p + Sigma (K x + q)
 *     pb  <- p + theta (p - p_prev)
 *     x   <- prox_G^Gamma (x - Gamma K^T pb).
 *
 * Feasibility is restored by an exact lower-level solve at the start of
 * every outer iteration. The linear models keep c unconstrained; the TV
 * model projects c onto [0, c_max].
 *===========================================================================*/
#pragma once

#include <algorithm>
#include <vector>

#include "lower_level.hpp"

namespace maskforge {

struct SppdParams {
  double lambda = 0.01;
  double mu1 = 0.05;   // proximity weight on c
  double mu2 = 0.0;    // proximity weight on u
  double gamma = 1e-6; // preconditioning exponent
  double theta = 1.0;  // dual extrapolation
  int inner_iters = 2000;
  int outer_iters = 150;
  double stop_rel_tol = 1e-7; // relative upper-energy change
  int stop_patience = 5;      // consecutive small changes before stopping
  double tv_newton_tol = 1e-9;

  /* Per-model proximity weights and iteration budgets. */
  static SppdParams defaults_for(const Model& model, double lambda) {
    SppdParams p;
    p.lambda = lambda;
    switch (model.kind) {
      case ModelKind::Harmonic:
        p.mu1 = 0.05; p.mu2 = 0.0;
        p.outer_iters = 150; p.inner_iters = 2000;
        break;
      case ModelKind::Biharmonic:
        p.mu1 = 0.1; p.mu2 = 0.2;
        p.outer_iters = 300; p.inner_iters = 4000;
        break;
      case ModelKind::SmoothedTV:
        p.mu1 = 0.05; p.mu2 = 0.1;
        p.outer_iters = 150; p.inner_iters = 2000;
        break;
    }
    return p;
  }
};

/* K = (D_u, D_c) with diagonal D_c, N x 2N. */
struct LinearizedSystem {
  SpMat du;
  Vec dc;  // diagonal of D_c
  Vec q;   // -D_u u_hat - D_c c_hat
};

/* Jacobians of T(u, c) = C(u - g) + (I - C) G u:
 * D_u = A(c_hat), D_c = diag(u_hat - g - G u_hat). */
inline LinearizedSystem jacobians_linear(const GridOperators& ops, const Vec& u_hat,
                                         const Vec& c_hat, const Vec& g,
                                         ModelKind kind) {
  const SpMat& g_op = ops.smoothing_operator(kind);
  LinearizedSystem sys;
  sys.du = inpaint_matrix(g_op, c_hat);
  sys.dc = u_hat - g - Vec(g_op * u_hat);
  sys.q = -(sys.du * u_hat) - sys.dc.cwiseProduct(c_hat);
  return sys;
}

/* TV Jacobians: D_u is the lower-level Hessian (SPD), and
 * D_c = diag(1/(1-c)^2) diag(u - g). */
inline LinearizedSystem jacobians_tv(const GridOperators& ops, const Vec& u_hat,
                                     const Vec& c_hat, const Vec& g, double eps) {
  LinearizedSystem sys;
  sys.du = tv_hessian(ops, u_hat, c_hat, eps);
  sys.dc = (u_hat - g).array() / (1.0 - c_hat.array()).square();
  sys.q = -(sys.du * u_hat) - sys.dc.cwiseProduct(c_hat);
  return sys;
}

inline LinearizedSystem linearize(const GridOperators& ops, const Vec& u_hat,
                                  const Vec& c_hat, const Vec& g,
                                  const Model& model) {
  return model.is_linear()
             ? jacobians_linear(ops, u_hat, c_hat, g, model.kind)
             : jacobians_tv(ops, u_hat, c_hat, g, model.eps);
}

inline SpMat build_k(const LinearizedSystem& sys) {
  const Eigen::Index n = sys.du.rows();
  std::vector<Triplet> t;
  t.reserve(static_cast<size_t>(sys.du.nonZeros()) + n);
  for (int k = 0; k < sys.du.outerSize(); ++k)
    for (SpMat::InnerIterator it(sys.du, k); it; ++it)
      t.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (Eigen::Index i = 0; i < n; ++i)
    if (sys.dc[i] != 0.0)
      t.emplace_back(static_cast<int>(i), static_cast<int>(n + i), sys.dc[i]);
  SpMat k(n, 2 * n);
  k.setFromTriplets(t.begin(), t.end());
  return k;
}

struct Preconditioners {
  Vec tau;    // primal steps, length = cols(K)
  Vec sigma;  // dual steps, length = rows(K)
};

/* tau_j = 1 / sum_i |K_ij|^{2-gamma}, sigma_i = 1 / sum_j |K_ij|^gamma.
 * Structurally empty rows or columns get a guard value of 1 (D_c entries
 * vanish wherever u_hat = g and G u_hat = 0). */
inline Preconditioners preconditioners(const SpMat& k, double gamma) {
  if (!(gamma > 0.0 && gamma < 2.0))
    throw std::invalid_argument("preconditioners: gamma outside (0, 2)");
  Vec col_sum = Vec::Zero(k.cols());
  Vec row_sum = Vec::Zero(k.rows());
  for (int j = 0; j < k.outerSize(); ++j) {
    for (SpMat::InnerIterator it(k, j); it; ++it) {
      const double a = std::abs(it.value());
      if (a == 0.0) continue;
      col_sum[it.col()] += std::pow(a, 2.0 - gamma);
      row_sum[it.row()] += std::pow(a, gamma);
    }
  }
  Preconditioners p;
  p.tau = col_sum.unaryExpr([](double s) { return s > 0.0 ? 1.0 / s : 1.0; });
  p.sigma = row_sum.unaryExpr([](double s) { return s > 0.0 ? 1.0 / s : 1.0; });
  return p;
}

struct PdInnerResult {
  Vec u;
  Vec c;
};

/* One run of the preconditioned primal-dual iteration on the linearized
 * problem, starting from the feasible point (u_hat, c_hat) and p = 0. */
inline PdInnerResult pd_inner(const GridOperators& ops, const Model& model,
                              const Vec& g, const Vec& u_hat, const Vec& c_hat,
                              const SppdParams& params) {
  const Eigen::Index n = g.size();
  const LinearizedSystem sys = linearize(ops, u_hat, c_hat, g, model);
  const SpMat k = build_k(sys);
  const SpMat kt = k.transpose();
  const Preconditioners pre = preconditioners(k, params.gamma);

  const Vec tau_u = pre.tau.head(n);
  const Vec tau_c = pre.tau.tail(n);

  // Precomputed prox coefficients (pointwise closed forms).
  const Vec u_den = (1.0 + (1.0 + params.mu2) * tau_u.array()).matrix();
  const Vec c_den = (1.0 + params.mu1 * tau_c.array()).matrix();

  Vec x(2 * n);
  x.head(n) = u_hat;
  x.tail(n) = c_hat;
  Vec p = Vec::Zero(n);
  Vec p_prev(n), pbar(n), xt(2 * n);

  for (int it = 0; it < params.inner_iters; ++it) {
    p_prev = p;
    p += pre.sigma.cwiseProduct(Vec(k * x + sys.q));
    pbar = p + params.theta * (p - p_prev);
    xt = x - pre.tau.cwiseProduct(Vec(kt * pbar));

    for (Eigen::Index i = 0; i < n; ++i)
      x[i] = (xt[i] + tau_u[i] * (g[i] + params.mu2 * u_hat[i])) / u_den[i];

    if (model.is_linear()) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double base = (xt[n + i] + tau_c[i] * params.mu1 * c_hat[i]) / c_den[i];
        x[n + i] = shrink(base, params.lambda * tau_c[i] / c_den[i]);
      }
    } else {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double base =
            (xt[n + i] + tau_c[i] * (params.mu1 * c_hat[i] - params.lambda)) / c_den[i];
        x[n + i] = std::clamp(base, 0.0, kCMax);
      }
    }
  }
  return {x.head(n), x.tail(n)};
}

/* Upper-level energy 1/2||u(c) - g||^2 + lambda ||c||_1 with u(c) the exact
 * lower-level solve. An all-zero mask reconstructs to the best constant. */
inline double upper_energy(const GridOperators& ops, const Vec& c, const Vec& g,
                           const Model& model, double lambda, Vec* u_out = nullptr,
                           const Vec* tv_warm = nullptr, double tv_tol = 1e-9) {
  Vec u;
  if (zero_mask(c))
    u = Vec::Constant(g.size(), g.mean());
  else
    u = solve_lower_level(ops, c, g, model, tv_tol, tv_warm);
  const double e = 0.5 * (u - g).squaredNorm() + lambda * c.lpNorm<1>();
  if (u_out) *u_out = std::move(u);
  return e;
}

struct SppdResult {
  MaskField mask;
  Vec u;  // exact lower-level reconstruction at the final mask
  std::vector<double> energy_trace;
  int outer_done = 0;
};

/* Outer loop: restore feasibility by an exact lower-level solve, linearize,
 * run the inner primal-dual solver, repeat. The dual variable restarts at
 * zero every outer iteration. */
inline SppdResult sppd_run(const GridOperators& ops, const Image& g,
                           const SppdParams& params, const Model& model) {
  const Eigen::Index n = g.data.size();
  SppdResult out;

  Vec c_hat = model.is_linear() ? Vec(Vec::Ones(n)) : Vec(Vec::Constant(n, kCMax));
  Vec u_hat;
  int small_change = 0;

  for (int outer = 0; outer < params.outer_iters; ++outer) {
    if (zero_mask(c_hat)) break;  // lambda large enough to empty the mask
    const double energy =
        upper_energy(ops, c_hat, g.data, model, params.lambda, &u_hat,
                     u_hat.size() ? &u_hat : nullptr, params.tv_newton_tol);
    if (!out.energy_trace.empty()) {
      const double prev = out.energy_trace.back();
      const double rel = std::abs(prev - energy) / std::max(1.0, std::abs(prev));
      small_change = rel < params.stop_rel_tol ? small_change + 1 : 0;
    }
    out.energy_trace.push_back(energy);
    out.outer_done = outer;
    if (small_change >= params.stop_patience) break;

    PdInnerResult inner = pd_inner(ops, model, g.data, u_hat, c_hat, params);
    c_hat = std::move(inner.c);
    u_hat = std::move(inner.u);  // warm start for the next restoration
  }

  const double final_energy =
      upper_energy(ops, c_hat, g.data, model, params.lambda, &u_hat,
                   u_hat.size() ? &u_hat : nullptr, params.tv_newton_tol);
  out.energy_trace.push_back(final_energy);
  out.mask = MaskField(std::move(c_hat));
  out.u = std::move(u_hat);
  return out;
}

}  // namespace maskforge
