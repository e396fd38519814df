#pragma once

#include <vector>

#include "bmdrom/errors.hpp"
#include "bmdrom/linalg.hpp"
#include "bmdrom/reduced_model.hpp"
#include "bmdrom/rom_dmdc.hpp"
#include "bmdrom/snapshots.hpp"

namespace bmdrom {

inline Matrix stack_columns(const std::vector<SnapshotSet>& snaps) {
  if (snaps.empty()) throw DimensionError("no snapshot sets");
  Eigen::Index cols = 0;
  for (const auto& s : snaps) {
    if (s.X0.rows() != snaps[0].X0.rows())
      throw DimensionError("snapshot sets differ in state dimension");
    cols += s.X0.cols();
  }
  Matrix fat(snaps[0].X0.rows(), cols);
  Eigen::Index c = 0;
  for (const auto& s : snaps) {
    fat.middleCols(c, s.X0.cols()) = s.X0;
    c += s.X0.cols();
  }
  return fat;
}

// Left singular vectors of the column-stacked X0 blocks (reusable for any n_z).
inline Svd shared_pod_modes(const std::vector<SnapshotSet>& snaps) {
  return thin_svd(stack_columns(snaps), false);
}

inline Matrix pod_basis(const Svd& modes, int n_z) {
  check_rank(modes.s, n_z, "POD basis");
  return modes.U.leftCols(n_z);
}

inline Matrix build_shared_pod_basis(const std::vector<SnapshotSet>& snaps,
                                     int n_z) {
  return pod_basis(shared_pod_modes(snaps), n_z);
}

// [F G (L); H D (P)] = [T^T X1; Y0] [T^T X0; U0 (; U1)]^+
inline ReducedModel projected_ls_fit(const SnapshotSet& snap, const Matrix& test,
                                     const Matrix& lift, bool algebraic,
                                     double pinv_tol = -1.0) {
  if (snap.X0.cols() == 0) throw DimensionError("empty snapshot set");
  if (test.rows() != snap.X0.rows() || lift.rows() != snap.X0.rows() ||
      test.cols() != lift.cols())
    throw DimensionError("projection basis does not match the snapshot set");
  const Eigen::Index nz = test.cols(), nu = snap.U0.rows(),
                     ny = snap.Y0.rows(), ns = snap.X0.cols();
  const Eigen::Index nreg = nz + nu * (algebraic ? 2 : 1);
  Matrix reg(nreg, ns);
  reg.topRows(nz) = test.transpose() * snap.X0;
  reg.middleRows(nz, nu) = snap.U0;
  if (algebraic) reg.bottomRows(nu) = snap.U1;
  Matrix tgt(nz + ny, ns);
  tgt.topRows(nz) = test.transpose() * snap.X1;
  tgt.bottomRows(ny) = snap.Y0;
  const Matrix M = tgt * pinv(reg, pinv_tol);
  ReducedModel m;
  m.F = M.topLeftCorner(nz, nz);
  m.G = M.block(0, nz, nz, nu);
  m.H = M.bottomLeftCorner(ny, nz);
  m.D = M.block(nz, nz, ny, nu);
  if (algebraic) {
    m.L = M.block(0, nz + nu, nz, nu);
    m.P = M.block(nz, nz + nu, ny, nu);
  }
  m.lift = lift;
  m.test = test;
  m.rho = snap.rho;
  return m;
}

inline ReducedModel iorom_fit(const SnapshotSet& snap, const Matrix& Q,
                              bool algebraic = false, double pinv_tol = -1.0) {
  return projected_ls_fit(snap, Q, Q, algebraic, pinv_tol);
}

}  // namespace bmdrom
