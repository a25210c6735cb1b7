/*=============================================================================
 * Discrete differential operators on a regular pixel grid with reflecting
 * (Neumann) boundary handling.
 *
 * Forward differences are used throughout; a one-sided difference vanishes
 * across the boundary, so the corresponding operator row is structurally
 * empty. The Laplacian is assembled as Delta = -grad^T grad, which makes the
 * energy identity 1/2||grad u||^2 <-> -u^T Delta u exact by construction,
 * and the biharmonic operator as the explicit product Delta*Delta so that
 * boundary rows inherit the Neumann modification automatically.
 *
 * Pixel (x, y) maps to index y*width + x (row-major).
 *===========================================================================*/
#pragma once

#include "types.hpp"

namespace maskforge {

namespace detail {
inline void check_grid(int width, int height) {
  if (width < 1 || height < 1)
    throw std::invalid_argument("grid_ops: zero-sized grid");
}
}  // namespace detail

/* Forward difference in x: row i holds {-1 at i, +1 at i+1} except in the
 * last column, where the row is empty. N x N. */
inline SpMat build_gradient_x(int width, int height) {
  detail::check_grid(width, height);
  const int n = width * height;
  std::vector<Triplet> t;
  t.reserve(static_cast<size_t>(2) * n);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x + 1 < width; ++x) {
      const int i = y * width + x;
      t.emplace_back(i, i, -1.0);
      t.emplace_back(i, i + 1, 1.0);
    }
  }
  SpMat m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

/* Forward difference in y; empty rows in the last image row. N x N. */
inline SpMat build_gradient_y(int width, int height) {
  detail::check_grid(width, height);
  const int n = width * height;
  std::vector<Triplet> t;
  t.reserve(static_cast<size_t>(2) * n);
  for (int y = 0; y + 1 < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int i = y * width + x;
      t.emplace_back(i, i, -1.0);
      t.emplace_back(i, i + width, 1.0);
    }
  }
  SpMat m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

/* Stacked gradient (grad_x; grad_y), 2N x N. */
inline SpMat build_gradient(int width, int height) {
  detail::check_grid(width, height);
  const int n = width * height;
  const SpMat gx = build_gradient_x(width, height);
  const SpMat gy = build_gradient_y(width, height);
  std::vector<Triplet> t;
  t.reserve(static_cast<size_t>(gx.nonZeros()) + gy.nonZeros());
  for (int k = 0; k < gx.outerSize(); ++k)
    for (SpMat::InnerIterator it(gx, k); it; ++it)
      t.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (int k = 0; k < gy.outerSize(); ++k)
    for (SpMat::InnerIterator it(gy, k); it; ++it)
      t.emplace_back(static_cast<int>(it.row()) + n, static_cast<int>(it.col()), it.value());
  SpMat m(2 * n, n);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

/* Neumann Laplacian, Delta = -grad^T grad. Interior stencil (1,1,-4,1,1);
 * corner rows carry -2 on the diagonal, edge rows -3. */
inline SpMat build_laplacian(int width, int height) {
  const SpMat grad = build_gradient(width, height);
  SpMat lap = SpMat(-(grad.transpose() * grad).pruned());
  return lap;
}

/* Biharmonic operator Delta^2 = Delta*Delta; symmetric positive
 * semidefinite with the 13-point interior stencil (center 20). */
inline SpMat build_biharmonic(int width, int height) {
  const SpMat lap = build_laplacian(width, height);
  return SpMat((lap * lap).pruned());
}

inline Vec apply(const SpMat& a, const Vec& x) {
  if (a.cols() != x.size()) throw std::invalid_argument("apply: dimension mismatch");
  return a * x;
}

inline Vec apply_transpose(const SpMat& a, const Vec& x) {
  if (a.rows() != x.size())
    throw std::invalid_argument("apply_transpose: dimension mismatch");
  return a.transpose() * x;
}

inline SpMat transpose(const SpMat& a) { return SpMat(a.transpose()); }

/* Operators for one grid size, assembled once and shared by the solvers.
 * Immutable after construction. */
struct GridOperators {
  int width = 0;
  int height = 0;
  SpMat gx;       // N x N forward difference in x
  SpMat gy;       // N x N forward difference in y
  SpMat grad;     // 2N x N stacked gradient
  SpMat lap;      // Neumann Laplacian
  SpMat neg_lap;  // -Delta
  SpMat bih;      // Delta^2

  GridOperators(int w, int h)
      : width(w),
        height(h),
        gx(build_gradient_x(w, h)),
        gy(build_gradient_y(w, h)),
        grad(build_gradient(w, h)),
        lap(build_laplacian(w, h)),
        neg_lap(-lap),
        bih((lap * lap).pruned()) {}

  int size() const { return width * height; }

  /* The PSD smoothing operator G of the linear models: the lower-level
   * energy is 1/2 u^T G u, so G = -Delta (harmonic) or Delta^2
   * (biharmonic). */
  const SpMat& smoothing_operator(ModelKind kind) const {
    switch (kind) {
      case ModelKind::Harmonic:
        return neg_lap;
      case ModelKind::Biharmonic:
        return bih;
      default:
        throw std::invalid_argument("smoothing_operator: TV has no linear operator");
    }
  }
};

}  // namespace maskforge
