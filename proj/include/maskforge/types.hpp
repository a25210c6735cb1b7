/*=============================================================================
 * Core value types shared across the library: dense grayscale images in
 * [0,1], continuous inpainting masks, model selection, and the error
 * hierarchy used by the solvers.
 *===========================================================================*/
#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace maskforge {

using Vec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/* Upper bound of the admissible set for the TV model; keeps the fidelity
 * weights c/(1-c) finite (max weight ~1e6). */
inline constexpr double kCMax = 1.0 - 1e-6;

/* Mask binarization threshold used throughout the experiments. */
inline constexpr double kDefaultBinarizeThreshold = 0.01;

class SingularMatrixError : public std::runtime_error {
 public:
  explicit SingularMatrixError(const std::string& what)
      : std::runtime_error(what) {}
};

class NoConvergenceError : public std::runtime_error {
 public:
  explicit NoConvergenceError(const std::string& what)
      : std::runtime_error(what) {}
};

class LineSearchStallError : public std::runtime_error {
 public:
  explicit LineSearchStallError(const std::string& what)
      : std::runtime_error(what) {}
};

class UnsupportedFormatError : public std::runtime_error {
 public:
  explicit UnsupportedFormatError(const std::string& what)
      : std::runtime_error(what) {}
};

enum class ModelKind { Harmonic, Biharmonic, SmoothedTV };

/* Regularizer selection. eps is the TV smoothing parameter and is ignored
 * by the two linear kinds. */
struct Model {
  ModelKind kind = ModelKind::Harmonic;
  double eps = 0.01;

  static Model harmonic() { return {ModelKind::Harmonic, 0.0}; }
  static Model biharmonic() { return {ModelKind::Biharmonic, 0.0}; }
  static Model smoothed_tv(double eps) { return {ModelKind::SmoothedTV, eps}; }

  bool is_linear() const { return kind != ModelKind::SmoothedTV; }
  const char* name() const {
    switch (kind) {
      case ModelKind::Harmonic: return "harmonic";
      case ModelKind::Biharmonic: return "biharmonic";
      default: return "tv";
    }
  }
};

/* Dense grayscale raster, row-major, intensities in [0,1]. */
struct Image {
  int width = 0;
  int height = 0;
  Vec data;

  Image() = default;
  Image(int w, int h) : width(w), height(h), data(Vec::Zero(w * h)) {
    if (w < 1 || h < 1) throw std::invalid_argument("Image: zero-sized grid");
  }
  Image(int w, int h, Vec values) : width(w), height(h), data(std::move(values)) {
    if (w < 1 || h < 1) throw std::invalid_argument("Image: zero-sized grid");
    if (data.size() != static_cast<Eigen::Index>(w) * h)
      throw std::invalid_argument("Image: data length != width*height");
  }

  static Image constant(int w, int h, double v) {
    return Image(w, h, Vec::Constant(static_cast<Eigen::Index>(w) * h, v));
  }

  int size() const { return width * height; }
  double& at(int x, int y) { return data[static_cast<Eigen::Index>(y) * width + x]; }
  double at(int x, int y) const { return data[static_cast<Eigen::Index>(y) * width + x]; }

  bool intensities_in_range(double slack = 0.0) const {
    return data.minCoeff() >= -slack && data.maxCoeff() <= 1.0 + slack;
  }
};

/* Continuous per-pixel mask. Values live in [0, kCMax] for the TV model;
 * the linear models run the mask over unrestricted reals. */
struct MaskField {
  Vec c;

  MaskField() = default;
  explicit MaskField(Vec values) : c(std::move(values)) {}
  static MaskField ones(int n) { return MaskField(Vec::Ones(n)); }

  int size() const { return static_cast<int>(c.size()); }

  /* Fraction of entries whose magnitude exceeds the binarization threshold. */
  double density(double threshold = kDefaultBinarizeThreshold) const {
    if (c.size() == 0) return 0.0;
    Eigen::Index count = 0;
    for (Eigen::Index i = 0; i < c.size(); ++i)
      if (std::abs(c[i]) > threshold) ++count;
    return static_cast<double>(count) / static_cast<double>(c.size());
  }
};

/* Fidelity weights B(c) = diag(c_i / (1 - c_i)). The caller is responsible
 * for keeping c away from 1 (TV mode clamps to kCMax). */
inline Vec fidelity_weights(const Vec& c) {
  Vec b(c.size());
  for (Eigen::Index i = 0; i < c.size(); ++i) b[i] = c[i] / (1.0 - c[i]);
  return b;
}

/* Soft shrinkage, the proximal map of alpha |.|:
 * shrink_alpha(x) = sgn(x) max(|x| - alpha, 0). */
inline double shrink(double x, double alpha) {
  const double m = std::abs(x) - alpha;
  return m > 0.0 ? (x > 0.0 ? m : -m) : 0.0;
}

/* Mean squared error on the [0,255] gray scale; inputs are [0,1]-scaled. */
inline double mse(const Vec& u, const Vec& g) {
  if (u.size() != g.size()) throw std::invalid_argument("mse: size mismatch");
  const double scale = 255.0 * 255.0;
  return scale * (u - g).squaredNorm() / static_cast<double>(u.size());
}

inline double mse(const Image& u, const Image& g) {
  if (u.width != g.width || u.height != g.height)
    throw std::invalid_argument("mse: image size mismatch");
  return mse(u.data, g.data);
}

}  // namespace maskforge
