#pragma once

#include <cstddef>
#include <utility>

#include "lvr/common.hpp"

namespace lvr {

/// Dense row-major matrix of doubles. Sized for the small problems in this
/// project (readout rows, projection matrices, return-map Jacobians,
/// covariances up to a few hundred); no attempt at BLAS performance.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);
  static Matrix diag(const Vec& d);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }
  const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }

  Vec& data() { return data_; }
  const Vec& data() const { return data_; }

  Matrix transpose() const;
  Matrix operator*(const Matrix& rhs) const;
  Matrix operator+(const Matrix& rhs) const;
  Matrix operator-(const Matrix& rhs) const;
  Matrix& operator*=(double s);

  /// y = A x
  Vec apply(const Vec& x) const;
  /// y = A^T x
  Vec apply_transposed(const Vec& x) const;

  double frobenius_norm() const;
  double max_abs() const;
  bool all_finite() const;

  bool operator==(const Matrix& rhs) const {
    return rows_ == rhs.rows_ && cols_ == rhs.cols_ && data_ == rhs.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vec data_;
};

/// Probability vector: non-negative entries summing to one (within 1e-9).
struct DiscreteDistribution {
  Vec probs;

  std::size_t size() const { return probs.size(); }
  /// Throws InvalidInput if entries are negative or do not sum to one.
  void validate() const;
};

// Vector helpers shared across modules.
double dot(const Vec& a, const Vec& b);
double norm(const Vec& a);
Vec sub(const Vec& a, const Vec& b);
Vec add(const Vec& a, const Vec& b);
Vec scale(const Vec& a, double s);

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns (eigenvalues, eigenvectors) with eigenvalues descending and
/// eigenvectors as matrix columns.
std::pair<Vec, Matrix> symmetric_eigen(const Matrix& m);

/// Moore-Penrose pseudo-inverse of a symmetric matrix, computed from its
/// Jacobi eigendecomposition with relative cutoff 1e-10 on eigenvalue
/// magnitudes. This project only applies it to W W^T, which is symmetric PSD.
Matrix pseudo_inverse(const Matrix& m);

/// Orthogonal projector onto the row space of w: P = W^T (W W^T)^+ W.
Matrix row_space_projection(const Matrix& w);

/// Cosine of the angle between a and b; 0 if either norm is below 1e-12
/// (duplicate states produce zero chords, and those edges are filtered
/// downstream anyway).
double cosine_similarity(const Vec& a, const Vec& b);

/// Softmax of scores/tau with max-subtraction. tau must be positive.
DiscreteDistribution softmax(const Vec& scores, double tau);

/// KL(p || q) with q clamped below at 1e-12; zero-probability p terms
/// contribute nothing. Throws on length mismatch.
double kl_divergence(const DiscreteDistribution& p, const DiscreteDistribution& q);

struct PcaResult {
  Matrix components;       // k x d, rows are orthonormal principal directions
  Vec explained_variance;  // k eigenvalues of the sample covariance, descending
  double total_variance;   // trace of the sample covariance
};

/// PCA of the sample covariance (1/(n-1) normalization). Requires at least
/// two samples and k <= dimension.
PcaResult pca(const std::vector<Vec>& samples, std::size_t k);

/// Largest eigenvalue magnitude of a square matrix of dimension <= 8,
/// via Hessenberg reduction and shifted QR (eigenvalues read off the real
/// Schur form's 1x1 and 2x2 diagonal blocks).
double spectral_radius(const Matrix& m);

/// All eigenvalue magnitudes (sorted descending) of a square matrix of
/// dimension <= 8. spectral_radius returns the first entry.
Vec eigenvalue_magnitudes(const Matrix& m);

}  // namespace lvr
