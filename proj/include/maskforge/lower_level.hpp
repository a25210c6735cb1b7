/*=============================================================================
 * Lower-level inpainting problem: given a mask c and image g, reconstruct u
 * under the chosen regularizer.
 *
 * With G the PSD smoothing operator (-Delta or Delta^2), the linear models
 * solve
 *
 *     A u = C g,   A = C + (I - C) G,   C = diag(c),
 *
 * which is the stationarity condition of
 *
 *     E(u) = 1/2 u^T G u + 1/2 || B(c)^{1/2} (u - g) ||^2,
 *     B(c) = diag(c_i / (1 - c_i)),
 *
 * multiplied through by (I - C). The smoothed TV model minimizes
 *
 *     E(u) = sum_i sqrt((gx u)_i^2 + (gy u)_i^2 + eps^2)
 *            + 1/2 || B(c)^{1/2} (u - g) ||^2
 *
 * by Newton's method on the first-order residual T(u, c) with an Armijo
 * backtracking globalization and a harmonic warm start.
 *===========================================================================*/
#pragma once

#include "grid_ops.hpp"
#include "sparse_linalg.hpp"
#include "types.hpp"

namespace maskforge {

inline bool zero_mask(const Vec& c) {
  return c.size() == 0 || c.cwiseAbs().maxCoeff() == 0.0;
}

/* A(c) = diag(c) + (I - diag(c)) G, assembled on the fixed pattern of
 * G union the diagonal (explicit zeros are kept so that repeated
 * factorizations can reuse the symbolic analysis). */
inline SpMat inpaint_matrix(const SpMat& g_op, const Vec& c) {
  const Eigen::Index n = g_op.rows();
  if (c.size() != n) throw std::invalid_argument("inpaint_matrix: size mismatch");
  std::vector<Triplet> t;
  t.reserve(static_cast<size_t>(g_op.nonZeros()) + n);
  for (int k = 0; k < g_op.outerSize(); ++k)
    for (SpMat::InnerIterator it(g_op, k); it; ++it)
      t.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                     (1.0 - c[it.row()]) * it.value());
  for (Eigen::Index i = 0; i < n; ++i)
    t.emplace_back(static_cast<int>(i), static_cast<int>(i), c[i]);
  SpMat a(n, n);
  a.setFromTriplets(t.begin(), t.end());
  return a;
}

inline SpMat inpaint_matrix(const GridOperators& ops, const Vec& c, ModelKind kind) {
  return inpaint_matrix(ops.smoothing_operator(kind), c);
}

/* Harmonic or biharmonic reconstruction: solves A u = C g. */
inline Vec inpaint_linear(const GridOperators& ops, const Vec& c, const Vec& g,
                          ModelKind kind, const SolveOptions& opts = {}) {
  if (kind == ModelKind::SmoothedTV)
    throw std::invalid_argument("inpaint_linear: TV is not a linear model");
  if (c.size() != g.size() || c.size() != ops.size())
    throw std::invalid_argument("inpaint_linear: size mismatch");
  if (zero_mask(c))
    throw SingularMatrixError("inpaint_linear: mask is identically zero");
  Factorization f(inpaint_matrix(ops, c, kind), opts);
  return f.solve(c.cwiseProduct(g));
}

inline Image inpaint_linear(const GridOperators& ops, const MaskField& c,
                            const Image& g, ModelKind kind,
                            const SolveOptions& opts = {}) {
  return Image(g.width, g.height, inpaint_linear(ops, c.c, g.data, kind, opts));
}

namespace detail {

inline void check_tv_mask(const Vec& c) {
  for (Eigen::Index i = 0; i < c.size(); ++i)
    if (!(c[i] >= 0.0 && c[i] <= kCMax))
      throw std::invalid_argument("TV mask entry outside [0, c_max]");
}

/* rho_i = sqrt((gx u)_i^2 + (gy u)_i^2 + eps^2). */
inline Vec tv_rho(const GridOperators& ops, const Vec& u, double eps,
                  Vec* dx_out = nullptr, Vec* dy_out = nullptr) {
  Vec dx = ops.gx * u;
  Vec dy = ops.gy * u;
  Vec rho = (dx.array().square() + dy.array().square() + eps * eps).sqrt();
  if (dx_out) *dx_out = std::move(dx);
  if (dy_out) *dy_out = std::move(dy);
  return rho;
}

}  // namespace detail

/* Lower-level energy R(u) + 1/2 ||B(c)^{1/2}(u - g)||^2. */
inline double lower_energy(const GridOperators& ops, const Vec& u, const Vec& c,
                           const Vec& g, const Model& model) {
  double reg = 0.0;
  switch (model.kind) {
    case ModelKind::Harmonic:
      reg = 0.5 * ((ops.gx * u).squaredNorm() + (ops.gy * u).squaredNorm());
      break;
    case ModelKind::Biharmonic:
      reg = 0.5 * (ops.lap * u).squaredNorm();
      break;
    case ModelKind::SmoothedTV: {
      detail::check_tv_mask(c);
      reg = detail::tv_rho(ops, u, model.eps).sum();
      break;
    }
  }
  const Vec b = fidelity_weights(c);
  double fid = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const double d = u[i] - g[i];
    fid += b[i] * d * d;
  }
  return reg + 0.5 * fid;
}

/* First-order optimality residual of the TV lower level,
 * T(u, c) = grad^T (gx u / rho; gy u / rho) + B(c)(u - g). */
inline Vec tv_residual(const GridOperators& ops, const Vec& u, const Vec& c,
                       const Vec& g, double eps) {
  detail::check_tv_mask(c);
  Vec dx, dy;
  const Vec rho = detail::tv_rho(ops, u, eps, &dx, &dy);
  Vec res = ops.gx.transpose() * Vec(dx.cwiseQuotient(rho)) +
            ops.gy.transpose() * Vec(dy.cwiseQuotient(rho));
  const Vec b = fidelity_weights(c);
  res += b.cwiseProduct(u - g);
  return res;
}

/* Hessian of the TV lower-level energy in u (the D_u Jacobian block):
 *
 *   D_u = gx^T D1 gx + gy^T D2 gy - gx^T Dxy gy - gy^T Dxy gx + B,
 *   D1 = diag((gy u)^2 + eps^2) / rho^3, D2 = diag((gx u)^2 + eps^2) / rho^3,
 *   Dxy = diag((gx u)(gy u) / rho^3).
 *
 * Symmetric, and positive definite for eps > 0 with at least one c_i > 0. */
inline SpMat tv_hessian(const GridOperators& ops, const Vec& u, const Vec& c,
                        double eps) {
  detail::check_tv_mask(c);
  Vec dx, dy;
  const Vec rho = detail::tv_rho(ops, u, eps, &dx, &dy);
  const Vec rho3 = rho.array().cube();
  const Vec d1 = (dy.array().square() + eps * eps) / rho3.array();
  const Vec d2 = (dx.array().square() + eps * eps) / rho3.array();
  const Vec dxy = dx.cwiseProduct(dy).cwiseQuotient(rho3);

  const Eigen::Index n = u.size();
  SpMat h = SpMat(ops.gx.transpose() * d1.asDiagonal() * ops.gx) +
            SpMat(ops.gy.transpose() * d2.asDiagonal() * ops.gy) -
            SpMat(ops.gx.transpose() * dxy.asDiagonal() * ops.gy) -
            SpMat(ops.gy.transpose() * dxy.asDiagonal() * ops.gx);
  const Vec b = fidelity_weights(c);
  SpMat bdiag(n, n);
  bdiag.reserve(Eigen::VectorXi::Constant(n, 1));
  for (Eigen::Index i = 0; i < n; ++i) bdiag.insert(i, i) = b[i];
  h += bdiag;
  return h;
}

struct TvSolveStats {
  int newton_iters = 0;
  double residual_inf = 0.0;
};

/* Smoothed-TV reconstruction by damped Newton on T(u, c) = 0. The warm
 * start defaults to the harmonic solve at the same mask, which keeps
 * Newton inside its contraction basin. */
inline Vec inpaint_tv(const GridOperators& ops, const Vec& c, const Vec& g,
                      double eps, double tol = 1e-9, int max_newton = 100,
                      const Vec* warm_start = nullptr,
                      TvSolveStats* stats = nullptr) {
  if (eps <= 0.0) throw std::invalid_argument("inpaint_tv: eps must be positive");
  detail::check_tv_mask(c);
  if (zero_mask(c))
    throw SingularMatrixError("inpaint_tv: mask is identically zero");

  Vec u = warm_start ? *warm_start
                     : inpaint_linear(ops, c, g, ModelKind::Harmonic);
  Vec res = tv_residual(ops, u, c, g, eps);
  double res_inf = res.lpNorm<Eigen::Infinity>();
  RefactorLdlt ldlt;

  int iter = 0;
  while (res_inf > tol) {
    if (iter >= max_newton)
      throw NoConvergenceError("inpaint_tv: Newton iteration budget exhausted");
    ldlt.factorize(tv_hessian(ops, u, c, eps));
    const Vec step = -ldlt.solve(res);

    // Armijo backtracking on phi(u) = 1/2 ||T(u)||^2; the Newton direction
    // gives phi'(0) = -2 phi.
    const double phi0 = 0.5 * res.squaredNorm();
    double s = 1.0;
    Vec u_trial, res_trial;
    for (;;) {
      u_trial = u + s * step;
      res_trial = tv_residual(ops, u_trial, c, g, eps);
      const double phi = 0.5 * res_trial.squaredNorm();
      if (std::isfinite(phi) && phi <= (1.0 - 0.2 * s) * phi0) break;
      s *= 0.5;
      if (s < 1e-12)
        throw NoConvergenceError("inpaint_tv: line-search damping exhausted");
    }
    u = std::move(u_trial);
    res = std::move(res_trial);
    res_inf = res.lpNorm<Eigen::Infinity>();
    ++iter;
  }
  if (stats) *stats = {iter, res_inf};
  return u;
}

inline Image inpaint_tv(const GridOperators& ops, const MaskField& c,
                        const Image& g, double eps, double tol = 1e-9,
                        int max_newton = 100) {
  return Image(g.width, g.height, inpaint_tv(ops, c.c, g.data, eps, tol, max_newton));
}

/* Exact lower-level solve for any model; used by the upper-level solvers
 * to restore feasibility and to evaluate the reduced energy. */
inline Vec solve_lower_level(const GridOperators& ops, const Vec& c, const Vec& g,
                             const Model& model, double tv_tol = 1e-9,
                             const Vec* tv_warm_start = nullptr,
                             const SolveOptions& opts = {}) {
  if (model.is_linear()) return inpaint_linear(ops, c, g, model.kind, opts);
  return inpaint_tv(ops, c, g, model.eps, tv_tol, 100, tv_warm_start);
}

}  // namespace maskforge
