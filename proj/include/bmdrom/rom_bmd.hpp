#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "bmdrom/errors.hpp"
#include "bmdrom/gramians.hpp"
#include "bmdrom/linalg.hpp"
#include "bmdrom/parallel.hpp"
#include "bmdrom/reduced_model.hpp"
#include "bmdrom/rom_dmdc.hpp"
#include "bmdrom/rom_iorom.hpp"
#include "bmdrom/snapshots.hpp"

namespace bmdrom {

struct ObliqueProjector {
  Matrix V;
  std::vector<Matrix> W;
  std::vector<Vector> hankel;
  // Grid points whose Hankel values tie at the truncation boundary.
  std::vector<int> tie_warnings;

  Matrix projector(size_t j) const { return V * W[j].transpose(); }
};

// Per-grid-point quantities independent of n_z: factors and the SVD of H.
struct BmdFactors {
  Matrix Lc, Lo;
  Matrix Ut;  // left singular vectors of H = Lc^T Lo
  Vector hankel;
};

inline BmdFactors prepare_bmd_factors(const GramianPair& g) {
  if (g.Wc.rows() != g.Wo.rows())
    throw DimensionError("Gramian pair dimension mismatch");
  BmdFactors f;
  f.Lc = psd_factor(g.Wc, "Wc");
  f.Lo = psd_factor(g.Wo, "Wo");
  Svd h = thin_svd(f.Lc.transpose() * f.Lo, false);
  f.Ut = std::move(h.U);
  f.hankel = std::move(h.s);
  return f;
}

inline std::vector<BmdFactors> prepare_bmd_factors(
    const std::vector<GramianPair>& grams, int jobs = 1) {
  std::vector<BmdFactors> out(grams.size());
  parallel_for(static_cast<int>(grams.size()), jobs,
               [&](int j) { out[j] = prepare_bmd_factors(grams[j]); });
  return out;
}

inline constexpr double kTieTol = 1e-12;
inline constexpr double kPivotFloor = 1e-10;

inline ObliqueProjector bmd_spaces(const std::vector<BmdFactors>& fac, int n_z,
                                   int jobs = 1) {
  if (fac.empty()) throw DimensionError("no grid points");
  const Eigen::Index nx = fac[0].Lc.rows();
  if (n_z < 1 || n_z > nx) throw ConfigError("n_z outside [1, n_x]");
  const int ng = static_cast<int>(fac.size());
  ObliqueProjector out;
  Matrix Qbar(nx, static_cast<Eigen::Index>(ng) * n_z);
  for (int j = 0; j < ng; ++j) {
    const auto& f = fac[j];
    if (f.Lc.rows() != nx || f.Lo.rows() != nx)
      throw DimensionError("grid Gramians differ in dimension");
    try {
      check_rank(f.hankel, n_z, "Hankel matrix");
    } catch (const RankError&) {
      throw ProjectionError("n_z exceeds the rank of H", j);
    }
    if (n_z < f.hankel.size() &&
        f.hankel(n_z - 1) - f.hankel(n_z) <= kTieTol * f.hankel(0))
      out.tie_warnings.push_back(j);
  }
  parallel_for(ng, jobs, [&](int j) {
    const auto& f = fac[j];
    const Svd s = thin_svd(f.Lc * f.Ut.leftCols(n_z), false);
    Qbar.middleCols(static_cast<Eigen::Index>(j) * n_z, n_z) =
        s.U.leftCols(n_z);
  });
  out.V = thin_svd(Qbar, false).U.leftCols(n_z);

  out.W.resize(ng);
  std::vector<int> bad(ng, 0);
  parallel_for(ng, jobs, [&](int j) {
    const Matrix& Lo = fac[j].Lo;
    Eigen::HouseholderQR<Matrix> qr(Lo.transpose() * out.V);
    const Matrix R = qr.matrixQR().topRows(n_z).triangularView<Eigen::Upper>();
    const Vector d = R.diagonal().cwiseAbs();
    if (d.minCoeff() < kPivotFloor * d.maxCoeff() || d.maxCoeff() == 0.0) {
      bad[j] = 1;
      return;
    }
    const Matrix Q = qr.householderQ() * Matrix::Identity(Lo.cols(), n_z);
    // W = Lo Q R^-T, via W^T = R^-1 (Lo Q)^T
    const Matrix LoQ = Lo * Q;
    out.W[j] = R.triangularView<Eigen::Upper>()
                   .solve(LoQ.transpose())
                   .transpose();
  });
  for (int j = 0; j < ng; ++j)
    if (bad[j]) throw ProjectionError("L_o^T V is rank deficient", j);
  out.hankel.reserve(ng);
  for (const auto& f : fac) out.hankel.push_back(f.hankel);
  return out;
}

inline ObliqueProjector bmd_spaces(const std::vector<GramianPair>& grams,
                                   int n_z, int jobs = 1) {
  return bmd_spaces(prepare_bmd_factors(grams, jobs), n_z, jobs);
}

inline ReducedModel bmd_fit(const SnapshotSet& snap, const Matrix& V,
                            const Matrix& W, bool algebraic = false,
                            double pinv_tol = -1.0) {
  return projected_ls_fit(snap, W, V, algebraic, pinv_tol);
}

inline int select_order_from_hankel(const std::vector<Vector>& hankels,
                                    double threshold_fraction) {
  if (!(threshold_fraction > 0.0 && threshold_fraction < 1.0))
    throw ConfigError("Hankel threshold must be in (0, 1)");
  if (hankels.empty()) throw ConfigError("no Hankel vectors");
  int best = 0;
  for (const auto& h : hankels) {
    if (h.size() == 0) throw ConfigError("empty Hankel vector");
    const double cut = threshold_fraction * h(0);
    int count = 0;
    for (Eigen::Index i = 0; i < h.size(); ++i)
      if (h(i) >= cut) ++count;
    best = std::max(best, count);
  }
  return best;
}

}  // namespace bmdrom
