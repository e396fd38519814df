#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bmdrom/errors.hpp"

namespace bmdrom {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Svd {
  Matrix U;
  Vector s;
  Matrix V;
};

// Flip each singular pair so the largest-magnitude entry of the left vector
// is positive. First index wins on magnitude ties.
inline void normalize_signs(Matrix& U, Matrix* V = nullptr) {
  for (Eigen::Index j = 0; j < U.cols(); ++j) {
    Eigen::Index imax = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < U.rows(); ++i) {
      const double a = std::abs(U(i, j));
      if (a > best) {
        best = a;
        imax = i;
      }
    }
    if (U(imax, j) < 0.0) {
      U.col(j) = -U.col(j);
      if (V != nullptr && j < V->cols()) V->col(j) = -V->col(j);
    }
  }
}

// Thin SVD with deterministic signs. Eigen returns values sorted
// descending with a stable order.
inline Svd thin_svd(const Matrix& M, bool want_v = true) {
  Svd out;
  if (M.rows() == 0 || M.cols() == 0) {
    out.U = Matrix(M.rows(), 0);
    out.V = Matrix(M.cols(), 0);
    out.s = Vector(0);
    return out;
  }
  const unsigned opts =
      want_v ? (Eigen::ComputeThinU | Eigen::ComputeThinV) : Eigen::ComputeThinU;
  Eigen::BDCSVD<Matrix> svd(M, opts);
  out.U = svd.matrixU();
  out.s = svd.singularValues();
  if (want_v) out.V = svd.matrixV();
  normalize_signs(out.U, want_v ? &out.V : nullptr);
  return out;
}

inline double default_rank_tol(const Matrix& M, double smax) {
  return static_cast<double>(std::max(M.rows(), M.cols())) *
         std::numeric_limits<double>::epsilon() * smax;
}

inline int numerical_rank(const Vector& s, double tol) {
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > tol) ++r;
  return r;
}

inline int numerical_rank(const Matrix& M) {
  if (M.size() == 0) return 0;
  Eigen::BDCSVD<Matrix> svd(M);
  const Vector& s = svd.singularValues();
  return numerical_rank(s, default_rank_tol(M, s.size() ? s(0) : 0.0));
}

// Moore-Penrose pseudo-inverse; tol < 0 selects max(m,n)*eps*smax.
inline Matrix pinv(const Matrix& M, double tol = -1.0) {
  if (M.size() == 0) return Matrix::Zero(M.cols(), M.rows());
  Eigen::BDCSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double smax = s.size() ? s(0) : 0.0;
  if (tol < 0.0) tol = default_rank_tol(M, smax);
  Vector sinv = Vector::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > tol) sinv(i) = 1.0 / s(i);
  return svd.matrixV() * sinv.asDiagonal() * svd.matrixU().transpose();
}

// Eigenvalues down to -psd_tol * max(1, lambda_max) are treated as roundoff.
inline constexpr double kPsdTol = 1e-10;

inline Eigen::SelfAdjointEigenSolver<Matrix> checked_psd_eig(
    const Matrix& W, const std::string& name) {
  if (W.rows() != W.cols()) throw DimensionError(name + " is not square");
  const Matrix S = 0.5 * (W + W.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(S);
  if (es.info() != Eigen::Success)
    throw GramianError(name + ": eigendecomposition failed");
  const Vector& l = es.eigenvalues();
  const double lmax = l.size() ? l(l.size() - 1) : 0.0;
  if (l.size() && l(0) < -kPsdTol * std::max(1.0, lmax))
    throw GramianError(name + " is not positive semidefinite (min eigenvalue " +
                       std::to_string(l(0)) + ")");
  return es;
}

inline Matrix clamp_psd(const Matrix& W, const std::string& name = "matrix") {
  auto es = checked_psd_eig(W, name);
  const Vector l = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * l.asDiagonal() * es.eigenvectors().transpose();
}

// Symmetric square root factor L with W = L L^T.
inline Matrix eig_sqrt_factor(const Matrix& W,
                              const std::string& name = "matrix") {
  auto es = checked_psd_eig(W, name);
  const Vector l = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * l.asDiagonal();
}

// Cholesky factor, falling back to the eigen square root for singular input.
inline Matrix psd_factor(const Matrix& W, const std::string& name = "matrix") {
  checked_psd_eig(W, name);
  const Matrix S = 0.5 * (W + W.transpose());
  Eigen::LLT<Matrix> llt(S);
  if (llt.info() == Eigen::Success) {
    Matrix L = llt.matrixL();
    if (L.allFinite() && L.diagonal().minCoeff() > 0.0) return L;
  }
  return eig_sqrt_factor(W, name);
}

// X = A X A^T + Q by Smith doubling.
inline Matrix dlyap(const Matrix& A, const Matrix& Q, double tol = 1e-14,
                    int max_iter = 80) {
  if (A.rows() != A.cols() || Q.rows() != A.rows() || Q.cols() != A.cols())
    throw DimensionError("dlyap: dimension mismatch");
  Matrix X = Q;
  Matrix Ak = A;
  for (int it = 0; it < max_iter; ++it) {
    const Matrix dX = Ak * X * Ak.transpose();
    X += dX;
    Ak = Ak * Ak;
    if (dX.norm() <= tol * X.norm() && Ak.norm() < 1e-8) return X;
    if (!Ak.allFinite()) break;
  }
  throw NumericalError("dlyap: Smith iteration did not converge");
}

inline double spectral_radius(const Matrix& A) {
  if (A.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(A, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

// Bracketing knot and weight for grid interpolation. Exact knots give
// weight 0 on the lower bracket, except the last knot which gives weight 1.
struct GridLocation {
  int index = 0;
  double weight = 0.0;
};

inline GridLocation locate(const std::vector<double>& grid, double rho) {
  if (grid.empty()) throw DimensionError("empty grid");
  if (grid.size() == 1) return {0, 0.0};
  if (!(rho >= grid.front() && rho <= grid.back()))
    throw RangeError("parameter " + std::to_string(rho) + " outside grid [" +
                     std::to_string(grid.front()) + ", " +
                     std::to_string(grid.back()) + "]");
  const int n = static_cast<int>(grid.size());
  auto it = std::upper_bound(grid.begin(), grid.end(), rho);
  int j = static_cast<int>(it - grid.begin()) - 1;
  if (j >= n - 1) return {n - 2, 1.0};
  if (rho == grid[j]) return {j, 0.0};
  return {j, (rho - grid[j]) / (grid[j + 1] - grid[j])};
}

template <class M>
M lerp(const M& a, const M& b, double t) {
  if (t == 0.0) return a;
  if (t == 1.0) return b;
  return (1.0 - t) * a + t * b;
}

template <class M>
M lerp_at(const std::vector<M>& knots, const GridLocation& g) {
  if (knots.size() == 1) return knots[0];
  return lerp<M>(knots[g.index], knots[g.index + 1], g.weight);
}

inline double principal_angle_max(const Matrix& A, const Matrix& B) {
  Eigen::HouseholderQR<Matrix> qa(A), qb(B);
  const Matrix Qa = qa.householderQ() * Matrix::Identity(A.rows(), A.cols());
  const Matrix Qb = qb.householderQ() * Matrix::Identity(B.rows(), B.cols());
  // sine form stays accurate for tiny angles
  const Matrix resid = Qb - Qa * (Qa.transpose() * Qb);
  Eigen::JacobiSVD<Matrix> svd(resid);
  return std::asin(std::min(1.0, svd.singularValues()(0)));
}

}  // namespace bmdrom
