/*=============================================================================
 * Test-only oracles, deliberately independent of the library's solve paths:
 * dense Gaussian elimination with partial pivoting, finite differences,
 * plain gradient descent for the TV lower level, proximal gradient descent
 * on the reduced linearized problem, and a power iteration.
 *===========================================================================*/
#pragma once

#include <maskforge/grid_ops.hpp>
#include <maskforge/lower_level.hpp>

#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

namespace oracle {

using maskforge::SpMat;
using maskforge::Vec;
using Mat = Eigen::MatrixXd;

inline Mat to_dense(const SpMat& a) { return Mat(a); }

/* Hand-rolled dense Gaussian elimination with partial pivoting. */
inline Vec dense_solve(Mat a, Vec b) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n || b.size() != n)
    throw std::invalid_argument("dense_solve: shape mismatch");
  std::vector<Eigen::Index> perm(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index piv = k;
    double best = std::abs(a(k, k));
    for (Eigen::Index i = k + 1; i < n; ++i)
      if (std::abs(a(i, k)) > best) { best = std::abs(a(i, k)); piv = i; }
    if (best < 1e-300) throw std::runtime_error("dense_solve: singular matrix");
    if (piv != k) { a.row(piv).swap(a.row(k)); std::swap(b[piv], b[k]); }
    for (Eigen::Index i = k + 1; i < n; ++i) {
      const double m = a(i, k) / a(k, k);
      if (m == 0.0) continue;
      a.row(i).tail(n - k) -= m * a.row(k).tail(n - k);
      b[i] -= m * b[k];
    }
  }
  Vec x(n);
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    double s = b[i];
    for (Eigen::Index j = i + 1; j < n; ++j) s -= a(i, j) * x[j];
    x[i] = s / a(i, i);
  }
  (void)perm;
  return x;
}

/* Dense inverse column by column (small test systems only). */
inline Mat dense_inverse(const Mat& a) {
  const Eigen::Index n = a.rows();
  Mat inv(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    inv.col(j) = dense_solve(a, Vec(Vec::Unit(n, j)));
  return inv;
}

/* Central-difference gradient of a scalar function. */
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x,
                       double h = 1e-6) {
  Vec g(x.size());
  Vec xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    const double fp = f(xp);
    xp[i] = x[i] - h;
    const double fm = f(xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double fd_partial(const std::function<double(const Vec&)>& f, const Vec& x,
                         Eigen::Index i, double h = 1e-6) {
  Vec xp = x;
  xp[i] = x[i] + h;
  const double fp = f(xp);
  xp[i] = x[i] - h;
  const double fm = f(xp);
  return (fp - fm) / (2.0 * h);
}

/* Central-difference Jacobian of a vector map. */
inline Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x,
                       double h = 1e-6) {
  Vec xp = x;
  xp[0] += 0.0;
  const Vec f0 = f(x);
  Mat j(f0.size(), x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    xp[k] = x[k] + h;
    const Vec fp = f(xp);
    xp[k] = x[k] - h;
    const Vec fm = f(xp);
    xp[k] = x[k];
    j.col(k) = (fp - fm) / (2.0 * h);
  }
  return j;
}

/* Plain gradient descent on the TV lower-level energy; the step is chosen
 * from a crude curvature bound. */
inline Vec tv_gradient_descent(const maskforge::GridOperators& ops, const Vec& c,
                               const Vec& g, double eps, int iters,
                               const Vec& u0) {
  const Vec b = maskforge::fidelity_weights(c);
  const double lipschitz = b.maxCoeff() + 8.0 / eps;
  const double step = 1.0 / lipschitz;
  Vec u = u0;
  for (int k = 0; k < iters; ++k)
    u -= step * maskforge::tv_residual(ops, u, c, g, eps);
  return u;
}

/* Proximal gradient (ISTA) on the reduced linearized inner problem
 *
 *   min_c 1/2||M c + r - g||^2 + mu2/2||M c + r - u_hat||^2
 *         + mu1/2||c - c_hat||^2 + lambda ||c||_1   (+ [0,cmax] box for TV)
 *
 * where u = M c + r eliminates the linearized constraint. Strong convexity
 * (mu1 > 0) makes the iteration converge linearly, so enough iterations
 * give the optimum to machine precision. */
struct ReducedInnerOracle {
  Mat m;
  Vec r;
  Vec g, u_hat, c_hat;
  double mu1 = 0.0, mu2 = 0.0, lambda = 0.0;
  bool box = false;
  double cmax = maskforge::kCMax;

  double objective(const Vec& c) const {
    const Vec u = m * c + r;
    return 0.5 * (u - g).squaredNorm() + 0.5 * mu2 * (u - u_hat).squaredNorm() +
           0.5 * mu1 * (c - c_hat).squaredNorm() + lambda * c.lpNorm<1>();
  }

  Vec minimize(int iters) const {
    const Mat h = (1.0 + mu2) * (m.transpose() * m) + mu1 * Mat::Identity(m.cols(), m.cols());
    // Power iteration for the Lipschitz constant.
    Vec v = Vec::Ones(m.cols()).normalized();
    double lip = 1.0;
    for (int i = 0; i < 200; ++i) {
      v = h * v;
      lip = v.norm();
      v /= lip;
    }
    const double step = 1.0 / (lip * 1.01);
    Vec c = c_hat;
    for (int k = 0; k < iters; ++k) {
      const Vec u = m * c + r;
      const Vec grad = m.transpose() * Vec((u - g) + mu2 * (u - u_hat)) + mu1 * (c - c_hat);
      Vec z = c - step * grad;
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        if (box)
          z[i] = std::clamp(z[i] - step * lambda, 0.0, cmax);
        else
          z[i] = maskforge::shrink(z[i], step * lambda);
      }
      c = std::move(z);
    }
    return c;
  }
};

/* Operator 2-norm by power iteration on m^T m. */
inline double power_norm(const Mat& m, int iters = 300) {
  Vec v = Vec::Ones(m.cols());
  v.normalize();
  double s = 0.0;
  for (int i = 0; i < iters; ++i) {
    v = m.transpose() * (m * v);
    s = std::sqrt(v.norm());
    v.normalize();
  }
  return s;
}

}  // namespace oracle
