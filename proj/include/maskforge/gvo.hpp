/*=============================================================================
 * Mask binarization and gray value optimization (GVO).
 *
 * After thresholding the continuous mask, the stored intensities x at the
 * M mask points are re-optimized to minimize the reconstruction error:
 *
 *   linear models:  min_x 1/2 || A^{-1} S^T x - g ||^2,
 *                   grad = S A^{-T} (u - g),  u = A^{-1} S^T x,
 *
 *   smoothed TV:    min_x 1/2 || u(x) - g ||^2,
 *                   u(x) = argmin_u ||grad u||_eps + 1/2 ||B^{1/2}(u - S^T x)||^2,
 *                   grad = S B D_u^{-1} (u* - g)  (implicit differentiation),
 *
 * where S is the M x N sampling matrix of the binary mask and, for TV, B is
 * built from the binary mask with ones clamped to c_max. Both problems are
 * solved by L-BFGS from x0 = S g, so GVO can only improve the error.
 *===========================================================================*/
#pragma once

#include <cstdint>
#include <vector>

#include "lbfgs.hpp"
#include "lower_level.hpp"

namespace maskforge {

/* Binary mask as the sorted list of selected pixel indices (the rows of
 * the sampling matrix S). */
struct BinaryMask {
  int n = 0;                 // total pixel count N
  std::vector<int> indices;  // selected pixels, strictly increasing
  int negative_survivors = 0;  // mask entries that passed |c| > eps_T with c < 0

  int count() const { return static_cast<int>(indices.size()); }
  double density() const { return n > 0 ? static_cast<double>(count()) / n : 0.0; }

  Vec indicator() const {
    Vec v = Vec::Zero(n);
    for (int i : indices) v[i] = 1.0;
    return v;
  }

  /* S u: gather the mask pixels. */
  Vec gather(const Vec& u) const {
    Vec x(count());
    for (int i = 0; i < count(); ++i) x[i] = u[indices[i]];
    return x;
  }

  /* S^T x: scatter mask values into a zero image. */
  Vec scatter(const Vec& x) const {
    Vec u = Vec::Zero(n);
    for (int i = 0; i < count(); ++i) u[indices[i]] = x[i];
    return u;
  }
};

/* Threshold on magnitude: the linear models can drive mask entries
 * negative, and those pixels still carry information. */
inline BinaryMask binarize(const Vec& c, double eps_t = kDefaultBinarizeThreshold) {
  BinaryMask m;
  m.n = static_cast<int>(c.size());
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    if (std::abs(c[i]) > eps_t) {
      m.indices.push_back(static_cast<int>(i));
      if (c[i] < 0.0) ++m.negative_survivors;
    }
  }
  return m;
}

inline BinaryMask binarize(const MaskField& c, double eps_t = kDefaultBinarizeThreshold) {
  return binarize(c.c, eps_t);
}

struct GvoResult {
  Vec x;   // optimized gray values, length M
  Vec u;   // reconstruction from (mask, x)
  double mse_before = 0.0;  // reconstruction with x = S g
  double mse_after = 0.0;
  int iters = 0;
};

/* Gray value optimization for harmonic/biharmonic. A is factorized once;
 * every objective evaluation is two triangular solves. */
inline GvoResult gvo_linear(const GridOperators& ops, const BinaryMask& mask,
                            const Vec& g, ModelKind kind,
                            const LbfgsOptions& opt = {}) {
  if (mask.count() == 0)
    throw SingularMatrixError("gvo_linear: empty mask");
  const Factorization f(inpaint_matrix(ops, mask.indicator(), kind));

  auto objective = [&](const Vec& x, Vec& grad) {
    const Vec u = f.solve(mask.scatter(x));
    const Vec r = u - g;
    grad = mask.gather(f.solve_transpose(r));
    return 0.5 * r.squaredNorm();
  };

  GvoResult out;
  Vec x = mask.gather(g);
  out.mse_before = mse(f.solve(mask.scatter(x)), g);
  const LbfgsReport rep = lbfgs_minimize(objective, x, opt);
  out.iters = rep.iters;
  out.x = std::move(x);
  out.u = f.solve(mask.scatter(out.x));
  out.mse_after = mse(out.u, g);
  return out;
}

/* Bi-level GVO for smoothed TV. Each evaluation runs the lower-level
 * Newton solve at tight tolerance, warm-started from the previous
 * reconstruction. */
inline GvoResult gvo_tv(const GridOperators& ops, const BinaryMask& mask,
                        const Vec& g, double eps, const LbfgsOptions& opt = {},
                        double newton_tol = 1e-10) {
  if (mask.count() == 0)
    throw SingularMatrixError("gvo_tv: empty mask");
  const Vec c = mask.indicator() * kCMax;  // ones clamped to c_max
  const Vec b = fidelity_weights(c);

  Vec u_warm;
  RefactorLdlt ldlt;
  auto objective = [&](const Vec& x, Vec& grad) {
    const Vec target = mask.scatter(x);
    u_warm = inpaint_tv(ops, c, target, eps, newton_tol, 100,
                        u_warm.size() ? &u_warm : nullptr);
    const Vec r = u_warm - g;
    ldlt.factorize(tv_hessian(ops, u_warm, c, eps));
    grad = mask.gather(b.cwiseProduct(ldlt.solve(r)));
    return 0.5 * r.squaredNorm();
  };

  GvoResult out;
  Vec x = mask.gather(g);
  out.mse_before = mse(inpaint_tv(ops, c, mask.scatter(x), eps, newton_tol), g);
  const LbfgsReport rep = lbfgs_minimize(objective, x, opt);
  out.iters = rep.iters;
  out.x = std::move(x);
  out.u = inpaint_tv(ops, c, mask.scatter(out.x), eps, newton_tol,
                     100, u_warm.size() ? &u_warm : nullptr);
  out.mse_after = mse(out.u, g);
  return out;
}

/* Reconstruction from a binary mask without GVO (stored values S g). */
inline Vec reconstruct_from_mask(const GridOperators& ops, const BinaryMask& mask,
                                 const Vec& g, const Model& model,
                                 double tv_newton_tol = 1e-10) {
  if (mask.count() == 0)
    throw SingularMatrixError("reconstruct_from_mask: empty mask");
  if (model.is_linear())
    return inpaint_linear(ops, mask.indicator(), g, model.kind);
  const Vec c = mask.indicator() * kCMax;
  return inpaint_tv(ops, c, mask.scatter(mask.gather(g)), model.eps, tv_newton_tol);
}

}  // namespace maskforge
