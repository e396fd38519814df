#pragma once

#include "bmdrom/linalg.hpp"

namespace bmdrom {

// z_{k+1} = F z_k + G u_k + L u_{k+1},  y_k = H z_k + D u_k + P u_{k+1}
// in trim-deviation coordinates. H/D are empty for state-only fits, L/P are
// empty unless the algebraic variant was fitted. `lift` maps z to the full
// state, `test` maps a full-state deviation to z (W for BMD, Q or U-hat
// for the orthogonal methods).
struct ReducedModel {
  Matrix F, G, H, D, L, P;
  Matrix lift;
  Matrix test;
  double rho = 0.0;
  bool identifiable = true;

  Eigen::Index n_z() const { return F.rows(); }
  Eigen::Index n_u() const { return G.cols(); }
  Eigen::Index n_y() const { return H.rows(); }
  bool has_output() const { return H.size() != 0; }
  bool algebraic() const { return L.size() != 0; }
};

// Fills absent optional blocks with zeros so models can be interpolated
// and simulated uniformly.
inline ReducedModel completed(ReducedModel m, Eigen::Index n_y) {
  const auto nz = m.n_z(), nu = m.n_u();
  if (m.H.size() == 0) m.H = Matrix::Zero(n_y, nz);
  if (m.D.size() == 0) m.D = Matrix::Zero(n_y, nu);
  if (m.L.size() == 0) m.L = Matrix::Zero(nz, nu);
  if (m.P.size() == 0) m.P = Matrix::Zero(n_y, nu);
  return m;
}

}  // namespace bmdrom
