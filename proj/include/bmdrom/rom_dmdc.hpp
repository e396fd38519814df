#pragma once

#include <string>
#include <vector>

#include "bmdrom/errors.hpp"
#include "bmdrom/linalg.hpp"
#include "bmdrom/reduced_model.hpp"
#include "bmdrom/snapshots.hpp"

namespace bmdrom {

inline constexpr double kRankFloor = 1e-12;

inline void check_rank(const Vector& s, int k, const std::string& what) {
  if (k < 1) throw ConfigError(what + ": order must be >= 1");
  if (k > s.size())
    throw RankError(what + ": order exceeds available singular values", k - 1);
  if (s(k - 1) < kRankFloor * s(0))
    throw RankError(what + ": singular value below 1e-12 * smax", k - 1);
}

// SVDs reused across (r, n_z) sweeps for one snapshot set.
struct DmdcPrep {
  bool algebraic = false;
  Eigen::Index n_x = 0, n_u = 0;
  Svd regressor;  // [X0; U0] or [X0; U0; U1]
  Svd target;     // X1, left vectors only
  bool identifiable = true;
  double rho = 0.0;
};

inline DmdcPrep prepare_dmdc(const SnapshotSet& snap, bool algebraic) {
  if (snap.X0.cols() == 0) throw DimensionError("empty snapshot set");
  DmdcPrep p;
  p.algebraic = algebraic;
  p.n_x = snap.X0.rows();
  p.n_u = snap.U0.rows();
  p.rho = snap.rho;
  const Eigen::Index nrow = p.n_x + p.n_u * (algebraic ? 2 : 1);
  Matrix Om(nrow, snap.X0.cols());
  Om.topRows(p.n_x) = snap.X0;
  Om.middleRows(p.n_x, p.n_u) = snap.U0;
  if (algebraic) Om.bottomRows(p.n_u) = snap.U1;
  p.regressor = thin_svd(Om);
  p.target = thin_svd(snap.X1, false);
  // Collinear input rows (e.g. U1 == U0) leave the regression without a
  // unique solution; the pseudo-inverse still returns the minimum-norm one.
  const double tol = default_rank_tol(Om, p.regressor.s.size() ? p.regressor.s(0) : 0.0);
  int expect = numerical_rank(snap.X0) + numerical_rank(snap.U0);
  if (algebraic) expect += numerical_rank(snap.U1);
  p.identifiable = numerical_rank(p.regressor.s, tol) >= expect;
  return p;
}

// [A B (R)] = X1 V_r S_r^-1 U_r^T is never formed: with K = Uh^T X1 V_r S_r^-1,
// F = K U_x^T Uh, G = K U_u^T, L = K U_u1^T.
inline ReducedModel dmdc_fit(const DmdcPrep& p, const SnapshotSet& snap, int r,
                             int n_z) {
  if (r <= n_z) throw ConfigError("DMDc needs r > n_z");
  check_rank(p.regressor.s, r, "DMDc regressor");
  check_rank(p.target.s, n_z, "DMDc target");
  const Matrix Ur = p.regressor.U.leftCols(r);
  const Matrix Vr = p.regressor.V.leftCols(r);
  const Vector sinv = p.regressor.s.head(r).cwiseInverse();
  const Matrix Uh = p.target.U.leftCols(n_z);
  const Matrix K = (Uh.transpose() * snap.X1) * Vr * sinv.asDiagonal();
  ReducedModel m;
  m.F = K * (Ur.topRows(p.n_x).transpose() * Uh);
  m.G = K * Ur.middleRows(p.n_x, p.n_u).transpose();
  if (p.algebraic) m.L = K * Ur.bottomRows(p.n_u).transpose();
  m.lift = Uh;
  m.test = Uh;
  m.rho = p.rho;
  m.identifiable = p.identifiable;
  return m;
}

inline ReducedModel dmdc_fit(const SnapshotSet& snap, int r, int n_z) {
  return dmdc_fit(prepare_dmdc(snap, false), snap, r, n_z);
}

inline ReducedModel admdc_fit(const SnapshotSet& snap, int r, int n_z) {
  return dmdc_fit(prepare_dmdc(snap, true), snap, r, n_z);
}

inline int default_r(int n_z) { return n_z + 10; }

// aDMDc LPV predictor: every grid model advances its own reduced state; the
// lifted full states of the two bracketing models are interpolated.
class ParallelPredictor {
 public:
  ParallelPredictor(std::vector<ReducedModel> models, std::vector<double> grid,
                    std::vector<Vector> xbar, std::vector<Vector> ubar)
      : models_(std::move(models)),
        grid_(std::move(grid)),
        xbar_(std::move(xbar)),
        ubar_(std::move(ubar)) {
    if (models_.empty()) throw DimensionError("no grid models");
    if (grid_.size() != models_.size() || xbar_.size() != models_.size() ||
        ubar_.size() != models_.size())
      throw DimensionError("grid, model, and trim lists differ in length");
    const auto nz = models_[0].n_z();
    for (auto& m : models_) {
      if (m.n_z() != nz || m.n_u() != models_[0].n_u() ||
          m.lift.cols() != nz || m.lift.rows() != models_[0].lift.rows())
        throw DimensionError("grid models do not share dimensions");
      if (m.L.size() == 0) m.L = Matrix::Zero(nz, m.n_u());
    }
    z_.assign(models_.size(), Vector::Zero(nz));
  }

  void reset(const Vector& x0) {
    for (size_t j = 0; j < models_.size(); ++j)
      z_[j] = models_[j].lift.transpose() * (x0 - xbar_[j]);
  }

  Vector full_state(double rho) const {
    const auto g = locate(grid_, rho);
    if (models_.size() == 1) return lifted(0);
    if (g.weight == 0.0) return lifted(g.index);
    if (g.weight == 1.0) return lifted(g.index + 1);
    return (1.0 - g.weight) * lifted(g.index) + g.weight * lifted(g.index + 1);
  }

  // Consumes u_k and u_{k+1} (absolute), each model against its own trim.
  void advance(const Vector& u, const Vector& u_next) {
    for (size_t j = 0; j < models_.size(); ++j) {
      const auto& m = models_[j];
      z_[j] = m.F * z_[j] + m.G * (u - ubar_[j]) + m.L * (u_next - ubar_[j]);
      ++model_steps_;
    }
  }

  Vector lifted(size_t j) const { return models_[j].lift * z_[j] + xbar_[j]; }
  const std::vector<Vector>& states() const { return z_; }
  std::vector<Vector>& states() { return z_; }
  const std::vector<ReducedModel>& models() const { return models_; }
  const std::vector<double>& grid() const { return grid_; }
  const std::vector<Vector>& xbar() const { return xbar_; }
  const std::vector<Vector>& ubar() const { return ubar_; }
  long long model_steps() const { return model_steps_; }

 private:
  std::vector<ReducedModel> models_;
  std::vector<double> grid_;
  std::vector<Vector> xbar_, ubar_;
  std::vector<Vector> z_;
  long long model_steps_ = 0;
};

struct ParallelPrediction {
  Matrix states;   // interpolated full states, n_x x n
  Matrix outputs;  // readout * states
};

// u holds absolute inputs u_0..u_{n-1}; the last one is held.
inline ParallelPrediction admdc_lpv_predict(ParallelPredictor& pred,
                                            const Matrix& u,
                                            const Vector& rho_traj,
                                            const Vector& x0,
                                            const Matrix& readout) {
  const Eigen::Index n = u.cols();
  if (rho_traj.size() != n) throw DimensionError("input/parameter length");
  if (readout.cols() != x0.size()) throw DimensionError("readout width");
  pred.reset(x0);
  ParallelPrediction out;
  out.states.resize(x0.size(), n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out.states.col(k) = pred.full_state(rho_traj(k));
    if (k + 1 < n) pred.advance(u.col(k), u.col(k + 1));
  }
  out.outputs = readout * out.states;
  return out;
}

}  // namespace bmdrom
