#include <catch_amalgamated.hpp>

#include <random>

#include "bmdrom/linalg.hpp"
#include "bmdrom/parallel.hpp"

using namespace bmdrom;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Matrix randn(int r, int c, unsigned seed) {
  std::mt19937 g(seed);
  std::normal_distribution<double> n;
  Matrix M(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) M(i, j) = n(g);
  return M;
}

}  // namespace

TEST_CASE("thin SVD reconstructs and has deterministic signs") {
  const Matrix M = randn(7, 4, 1);
  const Svd s = thin_svd(M);
  REQUIRE(s.U.cols() == 4);
  CHECK((s.U * s.s.asDiagonal() * s.V.transpose() - M).norm() < 1e-12 * M.norm());
  for (Eigen::Index j = 0; j < s.U.cols(); ++j) {
    Eigen::Index i;
    s.U.col(j).cwiseAbs().maxCoeff(&i);
    CHECK(s.U(i, j) > 0.0);
  }
  const Svd flipped = thin_svd(-M);
  // the sign convention pins U; the flip moves to V
  CHECK((flipped.U - s.U).norm() < 1e-12);
  CHECK((flipped.V + s.V).norm() < 1e-12);
}

TEST_CASE("sign normalization: first index wins ties") {
  Matrix U(2, 1);
  U << -0.5, 0.5;
  normalize_signs(U);
  CHECK(U(0, 0) == 0.5);
  CHECK(U(1, 0) == -0.5);
}

TEST_CASE("numerical rank and pseudo-inverse") {
  Matrix M = randn(6, 3, 2);
  Matrix R(6, 4);
  R << M, M.col(0) + M.col(1);  // rank 3
  CHECK(numerical_rank(R) == 3);
  const Matrix P = pinv(R);
  // Penrose conditions
  CHECK((R * P * R - R).norm() < 1e-12 * R.norm());
  CHECK((P * R * P - P).norm() < 1e-12 * P.norm());
  CHECK(((R * P).transpose() - R * P).norm() < 1e-12);
  CHECK(((P * R).transpose() - P * R).norm() < 1e-12);
  // full column rank: left inverse
  CHECK((pinv(M) * M - Matrix::Identity(3, 3)).norm() < 1e-12);
  CHECK(pinv(Matrix(0, 3)).rows() == 3);
}

TEST_CASE("PSD checks use a relative tolerance") {
  Matrix W = Matrix::Identity(3, 3) * 1e6;
  W(2, 2) = -1e-5;  // -1e-11 relative: roundoff
  CHECK_NOTHROW(clamp_psd(W));
  W(2, 2) = -1.0;
  CHECK_THROWS_AS(clamp_psd(W), GramianError);
  const Matrix A = randn(4, 2, 3);
  const Matrix S = A * A.transpose();  // singular
  const Matrix L = psd_factor(S);
  CHECK((L * L.transpose() - S).norm() < 1e-10 * S.norm());
  const Matrix S2 = S + Matrix::Identity(4, 4);
  const Matrix L2 = psd_factor(S2);
  CHECK((L2 * L2.transpose() - S2).norm() < 1e-12 * S2.norm());
}

TEST_CASE("dlyap matches the series sum") {
  Matrix A = randn(5, 5, 4);
  A *= 0.8 / spectral_radius(A);
  const Matrix B = randn(5, 2, 5);
  const Matrix Q = B * B.transpose();
  Matrix ref = Matrix::Zero(5, 5), Ak = Matrix::Identity(5, 5);
  for (int k = 0; k < 400; ++k) {
    ref += Ak * Q * Ak.transpose();
    Ak = A * Ak;
  }
  const Matrix X = dlyap(A, Q);
  CHECK((X - ref).norm() < 1e-12 * ref.norm());
  CHECK((A * X * A.transpose() + Q - X).norm() < 1e-12 * X.norm());
  CHECK_THROWS_AS(dlyap(2.0 * Matrix::Identity(2, 2), Matrix::Identity(2, 2)),
                  NumericalError);
}

TEST_CASE("grid location and interpolation") {
  const std::vector<double> g = {20, 22, 24};
  auto l = locate(g, 21.0);
  CHECK(l.index == 0);
  CHECK_THAT(l.weight, WithinAbs(0.5, 1e-15));
  l = locate(g, 22.0);
  CHECK(l.index == 1);
  CHECK(l.weight == 0.0);
  l = locate(g, 24.0);
  CHECK(l.index == 1);
  CHECK(l.weight == 1.0);
  CHECK_THROWS_AS(locate(g, 19.99), RangeError);
  CHECK_THROWS_AS(locate(g, 24.01), RangeError);
  CHECK(locate({30.0}, 99.0).weight == 0.0);

  const std::vector<Matrix> knots = {Matrix::Constant(1, 1, 1.0),
                                     Matrix::Constant(1, 1, 3.0),
                                     Matrix::Constant(1, 1, 7.0)};
  CHECK_THAT(lerp_at(knots, locate(g, 23.0))(0, 0), WithinAbs(5.0, 1e-15));
  CHECK(lerp_at(knots, locate(g, 24.0))(0, 0) == 7.0);
}

TEST_CASE("principal angles") {
  Matrix A = Matrix::Zero(3, 1), B = Matrix::Zero(3, 1);
  A(0, 0) = 1.0;
  B(0, 0) = std::cos(1e-9);
  B(1, 0) = std::sin(1e-9);
  CHECK_THAT(principal_angle_max(A, B), WithinRel(1e-9, 1e-6));
  B.setZero();
  B(2, 0) = 2.0;
  CHECK_THAT(principal_angle_max(A, B), WithinAbs(std::acos(0.0), 1e-12));
}

TEST_CASE("parallel_for covers every index and rethrows") {
  std::vector<int> hit(100, 0);
  parallel_for(100, 4, [&](int i) { hit[i] += 1; });
  for (int h : hit) CHECK(h == 1);
  CHECK_THROWS_AS(parallel_for(10, 3,
                               [](int i) {
                                 if (i == 7) throw ConfigError("boom");
                               }),
                  ConfigError);
}
