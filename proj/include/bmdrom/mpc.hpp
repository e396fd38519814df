#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "bmdrom/errors.hpp"
#include "bmdrom/linalg.hpp"
#include "bmdrom/lpv.hpp"
#include "bmdrom/plant.hpp"
#include "bmdrom/rom_dmdc.hpp"
#include "bmdrom/signals.hpp"
#include "bmdrom/snapshots.hpp"

namespace bmdrom {

struct MpcConfig {
  int horizon = 10;
  Matrix N;        // tracked-output weight
  Matrix M;        // input weight
  Matrix M_delta;  // input-rate weight
  Vector u_min, u_max;
  std::vector<int> controlled = {4};
  std::vector<int> tracked = {0};
  int max_iter = 20000;
  double tol = 1e-8;
};

inline MpcConfig paper_mpc_config(double n_weight) {
  MpcConfig c;
  c.N = Matrix::Constant(1, 1, n_weight);
  c.M = Matrix::Constant(1, 1, 10.0);
  c.M_delta = Matrix::Constant(1, 1, 0.1);
  c.u_min = Vector::Constant(1, -3.0);
  c.u_max = Vector::Constant(1, 3.0);
  return c;
}
inline MpcConfig paper_bending_config() { return paper_mpc_config(13000.0); }
inline MpcConfig paper_lift_config() { return paper_mpc_config(1300.0); }

inline void validate(const MpcConfig& c) {
  const auto nc = static_cast<Eigen::Index>(c.controlled.size());
  const auto nt = static_cast<Eigen::Index>(c.tracked.size());
  if (c.horizon < 1) throw ConfigError("MPC horizon must be >= 1");
  if (nc < 1 || nt < 1) throw ConfigError("MPC needs controlled and tracked channels");
  if (c.N.rows() != nt || c.N.cols() != nt || c.M.rows() != nc ||
      c.M.cols() != nc || c.M_delta.rows() != nc || c.M_delta.cols() != nc ||
      c.u_min.size() != nc || c.u_max.size() != nc)
    throw ConfigError("MPC weight or bound dimensions do not match channels");
  for (const Matrix* W : {&c.N, &c.M, &c.M_delta}) {
    if (!W->allFinite()) throw ConfigError("non-finite MPC weight");
    if ((*W - W->transpose()).norm() > 1e-12 * std::max(1.0, W->norm()))
      throw ConfigError("MPC weights must be symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> es(*W);
    if (es.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, W->norm()))
      throw ConfigError("MPC weights must be positive semidefinite");
  }
  for (Eigen::Index i = 0; i < nc; ++i)
    if (!(c.u_min(i) < c.u_max(i))) throw ConfigError("u_min must be < u_max");
}

// One affine state recursion contributing additively to the prediction:
//   z+ = F z + G (u - ubar) + L (u+ - ubar)
//   y  = Hy z + Dy (u - ubar) + Py (u+ - ubar) + y_offset
struct PredictorComponent {
  Matrix F, G, L, Hy, Dy, Py;
  Vector ubar, y_offset;
  Vector z;  // state at the previous step k-1
};

// Prediction model for the window starting at step k with inputs known up
// to k-1. Decision variables are controlled-channel deviations from `ubar`.
struct HorizonModel {
  std::vector<PredictorComponent> parts;
  Vector ybar;    // output trim at the current parameter
  Vector ubar;    // input trim at the current parameter
  Vector u_prev;  // absolute input applied at k-1
  Vector base;    // absolute input at k with controlled channels at trim
};

struct CondensedQp {
  Matrix H;  // J = 0.5 U^T H U + f^T U + c
  Vector f;
  double c = 0.0;
  Matrix Gamma;  // stacked tracked deviations = y0 + Gamma U
  Vector y0;
};

namespace detail {

inline Matrix selector(const std::vector<int>& idx, Eigen::Index n) {
  Matrix S = Matrix::Zero(static_cast<Eigen::Index>(idx.size()), n);
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= n) throw ConfigError("channel index out of range");
    S(static_cast<Eigen::Index>(i), idx[i]) = 1.0;
  }
  return S;
}

inline Matrix block_diag(const Matrix& W, int reps) {
  Matrix B = Matrix::Zero(W.rows() * reps, W.cols() * reps);
  for (int i = 0; i < reps; ++i)
    B.block(i * W.rows(), i * W.cols(), W.rows(), W.cols()) = W;
  return B;
}

// u_{k+i} - ubar as (constant, linear in U); i >= horizon repeats the last.
struct AffineInput {
  Vector c;
  Matrix A;
};

inline AffineInput input_at(const HorizonModel& m, const Matrix& E, int i,
                            int horizon, const Vector& ubar) {
  const Eigen::Index nu = m.base.size(), nc = E.cols();
  AffineInput a{m.base - ubar, Matrix::Zero(nu, nc * horizon)};
  a.A.middleCols(std::min(i, horizon - 1) * nc, nc) = E;
  return a;
}

}  // namespace detail

inline CondensedQp condense(const HorizonModel& m, const Vector& u_prev_dev,
                            const Matrix& reference, const MpcConfig& cfg) {
  const int Nc = cfg.horizon;
  const Eigen::Index nu = m.base.size();
  const Eigen::Index nc = static_cast<Eigen::Index>(cfg.controlled.size());
  const Eigen::Index nt = static_cast<Eigen::Index>(cfg.tracked.size());
  const Eigen::Index nv = nc * Nc;
  if (reference.rows() != nt || reference.cols() != Nc)
    throw DimensionError("reference slice must be n_tracked x horizon");
  const Matrix E = detail::selector(cfg.controlled, nu).transpose();
  const Matrix S = detail::selector(cfg.tracked, m.ybar.size());

  CondensedQp q;
  q.y0 = Vector::Zero(nt * Nc);
  q.Gamma = Matrix::Zero(nt * Nc, nv);
  for (Eigen::Index i = 0; i < Nc; ++i)
    q.y0.segment(i * nt, nt) = -(S * m.ybar);

  for (const auto& p : m.parts) {
    const Eigen::Index nz = p.F.rows();
    Vector zc = p.z;
    Matrix zl = Matrix::Zero(nz, nv);
    const Vector prev = m.u_prev - p.ubar;
    for (int i = 0; i < Nc; ++i) {
      const auto ui = detail::input_at(m, E, i, Nc, p.ubar);
      const auto un = detail::input_at(m, E, i + 1, Nc, p.ubar);
      // z_{k+i} from z_{k+i-1}, u_{k+i-1}, u_{k+i}
      Vector nzc;
      Matrix nzl;
      if (i == 0) {
        nzc = p.F * zc + p.G * prev + p.L * ui.c;
        nzl = p.F * zl + p.L * ui.A;
      } else {
        const auto up = detail::input_at(m, E, i - 1, Nc, p.ubar);
        nzc = p.F * zc + p.G * up.c + p.L * ui.c;
        nzl = p.F * zl + p.G * up.A + p.L * ui.A;
      }
      zc = std::move(nzc);
      zl = std::move(nzl);
      const Vector yc = p.Hy * zc + p.Dy * ui.c + p.Py * un.c + p.y_offset;
      const Matrix yl = p.Hy * zl + p.Dy * ui.A + p.Py * un.A;
      q.y0.segment(i * nt, nt) += S * yc;
      q.Gamma.middleRows(i * nt, nt) += S * yl;
    }
  }

  Vector R(nt * Nc);
  for (int i = 0; i < Nc; ++i) R.segment(i * nt, nt) = reference.col(i);
  const Matrix Nb = detail::block_diag(cfg.N, Nc);
  const Matrix Mb = detail::block_diag(cfg.M, Nc);
  const Matrix Mdb = detail::block_diag(cfg.M_delta, Nc);
  // Delta U = Dm U - d0
  Matrix Dm = Matrix::Identity(nv, nv);
  for (Eigen::Index i = nc; i < nv; ++i) Dm(i, i - nc) = -1.0;
  Vector d0 = Vector::Zero(nv);
  d0.head(nc) = u_prev_dev;
  const Vector e0 = q.y0 - R;
  q.H = 2.0 * (q.Gamma.transpose() * Nb * q.Gamma + Mb +
               Dm.transpose() * Mdb * Dm);
  q.H = 0.5 * (q.H + q.H.transpose());
  q.f = 2.0 * (q.Gamma.transpose() * Nb * e0 - Dm.transpose() * Mdb * d0);
  q.c = e0.dot(Nb * e0) + d0.dot(Mdb * d0);
  return q;
}

// Cost of U by stepping the horizon model directly (no condensation).
inline double direct_horizon_cost(const HorizonModel& m, const Vector& U,
                                  const Vector& u_prev_dev,
                                  const Matrix& reference,
                                  const MpcConfig& cfg) {
  const int Nc = cfg.horizon;
  const Eigen::Index nc = static_cast<Eigen::Index>(cfg.controlled.size());
  std::vector<Vector> u(Nc + 1, m.base);
  for (int i = 0; i <= Nc; ++i) {
    const int src = std::min(i, Nc - 1);
    for (Eigen::Index c = 0; c < nc; ++c)
      u[i](cfg.controlled[c]) = m.ubar(cfg.controlled[c]) + U(src * nc + c);
  }
  std::vector<Vector> y(Nc, -m.ybar);
  for (const auto& p : m.parts) {
    Vector z = p.z;
    for (int i = 0; i < Nc; ++i) {
      const Vector prev = (i == 0 ? m.u_prev : u[i - 1]) - p.ubar;
      z = p.F * z + p.G * prev + p.L * (u[i] - p.ubar);
      y[i] += p.Hy * z + p.Dy * (u[i] - p.ubar) + p.Py * (u[i + 1] - p.ubar) +
              p.y_offset;
    }
  }
  double J = 0.0;
  Vector last = u_prev_dev;
  for (int i = 0; i < Nc; ++i) {
    Vector yt(cfg.tracked.size());
    for (size_t t = 0; t < cfg.tracked.size(); ++t) yt(t) = y[i](cfg.tracked[t]);
    const Vector e = yt - reference.col(i);
    const Vector du = U.segment(i * nc, nc);
    const Vector dd = du - last;
    J += e.dot(cfg.N * e) + du.dot(cfg.M * du) + dd.dot(cfg.M_delta * dd);
    last = du;
  }
  return J;
}

struct QpResult {
  Vector x;
  double kkt_residual = 0.0;
  int iterations = 0;
};

inline Vector box_project(const Vector& x, const Vector& lb, const Vector& ub) {
  return x.cwiseMax(lb).cwiseMin(ub);
}

inline double kkt_residual(const Matrix& H, const Vector& f, const Vector& x,
                           const Vector& lb, const Vector& ub) {
  const Vector g = H * x + f;
  return (x - box_project(x - g, lb, ub)).cwiseAbs().maxCoeff();
}

// Box-constrained convex QP: accelerated projected gradient, with an exact
// solve on the guessed free set tried periodically.
inline QpResult solve_box_qp(const Matrix& H, const Vector& f, const Vector& lb,
                             const Vector& ub, int max_iter = 20000,
                             double tol = 1e-8) {
  const Eigen::Index n = f.size();
  if (H.rows() != n || H.cols() != n || lb.size() != n || ub.size() != n)
    throw DimensionError("QP dimension mismatch");
  if (!H.allFinite() || !f.allFinite()) throw ConfigError("non-finite QP data");
  const double scale = tol * (1.0 + f.cwiseAbs().maxCoeff());

  auto polish = [&](const Vector& x) -> Vector {
    const Vector g = H * x + f;
    std::vector<Eigen::Index> freeset;
    Vector y = x;
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool at_lo = x(i) <= lb(i) + 1e-12 * (1.0 + std::abs(lb(i))) && g(i) > 0.0;
      const bool at_hi = x(i) >= ub(i) - 1e-12 * (1.0 + std::abs(ub(i))) && g(i) < 0.0;
      if (at_lo) y(i) = lb(i);
      else if (at_hi) y(i) = ub(i);
      else freeset.push_back(i);
    }
    if (freeset.empty()) return y;
    const Eigen::Index nf = static_cast<Eigen::Index>(freeset.size());
    Matrix Hff(nf, nf);
    Vector rhs(nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      rhs(a) = -f(freeset[a]);
      for (Eigen::Index b = 0; b < n; ++b) {
        const bool is_free =
            std::find(freeset.begin(), freeset.end(), b) != freeset.end();
        if (!is_free) rhs(a) -= H(freeset[a], b) * y(b);
      }
      for (Eigen::Index b = 0; b < nf; ++b) Hff(a, b) = H(freeset[a], freeset[b]);
    }
    const Vector xf = Hff.ldlt().solve(rhs);
    for (Eigen::Index a = 0; a < nf; ++a) y(freeset[a]) = xf(a);
    return box_project(y, lb, ub);
  };

  QpResult r;
  // unconstrained minimizer first; often feasible
  Vector x = box_project(H.ldlt().solve(-f), lb, ub);
  double res = kkt_residual(H, f, x, lb, ub);
  if (res <= scale) {
    r.x = x;
    r.kkt_residual = res;
    return r;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(H, Eigen::EigenvaluesOnly);
  const double Lip = std::max(es.eigenvalues().maxCoeff(), 1e-300);
  Vector y = x, x_old = x;
  double t = 1.0;
  for (int it = 1; it <= max_iter; ++it) {
    x_old = x;
    x = box_project(y - (H * y + f) / Lip, lb, ub);
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = x + ((t - 1.0) / tn) * (x - x_old);
    t = tn;
    r.iterations = it;
    if (it % 10 == 0) {
      for (int p = 0; p < 3; ++p) {
        const Vector xp = polish(x);
        const double rp = kkt_residual(H, f, xp, lb, ub);
        if (rp <= scale) {
          r.x = xp;
          r.kkt_residual = rp;
          return r;
        }
        if (rp < kkt_residual(H, f, x, lb, ub)) x = xp;
        else break;
      }
      y = x;
      t = 1.0;
    }
    res = kkt_residual(H, f, x, lb, ub);
    if (res <= scale) {
      r.x = x;
      r.kkt_residual = res;
      return r;
    }
  }
  throw ConvergenceError("box QP hit the iteration cap", res);
}

struct HorizonSolution {
  Vector U;
  double cost = 0.0;
  double kkt_residual = 0.0;
  double condensation_error = 0.0;  // relative gap to direct simulation
};

inline HorizonSolution solve_horizon(const HorizonModel& m,
                                     const Vector& u_prev_dev,
                                     const Matrix& reference,
                                     const MpcConfig& cfg) {
  validate(cfg);
  const CondensedQp q = condense(m, u_prev_dev, reference, cfg);
  const int Nc = cfg.horizon;
  const Eigen::Index nc = static_cast<Eigen::Index>(cfg.controlled.size());
  Vector lb(nc * Nc), ub(nc * Nc);
  for (int i = 0; i < Nc; ++i) {
    lb.segment(i * nc, nc) = cfg.u_min;
    ub.segment(i * nc, nc) = cfg.u_max;
  }
  const QpResult r = solve_box_qp(q.H, q.f, lb, ub, cfg.max_iter, cfg.tol);
  HorizonSolution s;
  s.U = r.x;
  s.kkt_residual = r.kkt_residual;
  s.cost = 0.5 * r.x.dot(q.H * r.x) + q.f.dot(r.x) + q.c;
  const double direct = direct_horizon_cost(m, r.x, u_prev_dev, reference, cfg);
  s.condensation_error = std::abs(direct - s.cost) / std::max(1.0, std::abs(direct));
  return s;
}

// Supplies the prediction model at each step and tracks internal state.
class RomController {
 public:
  virtual ~RomController() = default;
  virtual void reset(const Vector& x0) = 0;
  // Model for the window starting at k given the plant state at k-1.
  virtual HorizonModel model(double rho, const Vector& x_prev,
                             const Vector& u_prev) = 0;
  virtual void applied(const Vector& /*u_prev*/, const Vector& /*u_now*/) {}
};

// Grid LPV model (IOROM, BMD, exact plant). The reduced state is the
// projected plant state, test(rho_j)^T (x - xbar_j) interpolated between
// the bracketing knots.
class GridRomController : public RomController {
 public:
  explicit GridRomController(GridROM g) : g_(std::move(g)) {
    validate(g_);
    if (g_.xbar.empty())
      throw ConfigError("state feedback needs full-state trims on the GridROM");
  }
  void reset(const Vector&) override {}
  HorizonModel model(double rho, const Vector& x_prev,
                     const Vector& u_prev) override {
    const FrozenROM fr = interpolate_at(g_, rho);
    const auto loc = locate(g_.grid_rhos, rho);
    auto proj = [&](size_t j) -> Vector {
      return g_.models[j].test.transpose() * (x_prev - g_.xbar[j]);
    };
    Vector z;
    if (g_.size() == 1 || loc.weight == 0.0) z = proj(loc.index);
    else if (loc.weight == 1.0) z = proj(loc.index + 1);
    else z = (1.0 - loc.weight) * proj(loc.index) + loc.weight * proj(loc.index + 1);
    HorizonModel m;
    m.parts.push_back(PredictorComponent{fr.F, fr.G, fr.L, fr.H, fr.D, fr.P,
                                         fr.ubar, fr.ybar, z});
    m.ybar = fr.ybar;
    m.ubar = fr.ubar;
    m.u_prev = u_prev;
    return m;
  }
  const GridROM& rom() const { return g_; }

 private:
  GridROM g_;
};

// aDMDc parallel predictor; its states advance on the applied inputs only.
class AdmdcController : public RomController {
 public:
  AdmdcController(const GridROM& g, Matrix readout)
      : pred_(g.models, g.grid_rhos, g.xbar, g.ubar),
        ybar_(g.ybar),
        readout_(std::move(readout)) {
    if (g.xbar.empty()) throw ConfigError("aDMDc predictor needs full-state trims");
  }
  void reset(const Vector& x0) override { pred_.reset(x0); }
  HorizonModel model(double rho, const Vector&, const Vector& u_prev) override {
    const auto loc = locate(pred_.grid(), rho);
    HorizonModel m;
    auto add = [&](size_t j, double w) {
      const auto& mod = pred_.models()[j];
      const Eigen::Index ny = readout_.rows(), nu = mod.n_u();
      m.parts.push_back(PredictorComponent{
          mod.F, mod.G, mod.L, w * (readout_ * mod.lift), Matrix::Zero(ny, nu),
          Matrix::Zero(ny, nu), pred_.ubar()[j], w * (readout_ * pred_.xbar()[j]),
          pred_.states()[j]});
    };
    if (pred_.grid().size() == 1 || loc.weight == 0.0) add(loc.index, 1.0);
    else if (loc.weight == 1.0) add(loc.index + 1, 1.0);
    else {
      add(loc.index, 1.0 - loc.weight);
      add(loc.index + 1, loc.weight);
    }
    m.ybar = lerp_at(ybar_, loc);
    m.ubar = lerp_at(pred_.ubar(), loc);
    m.u_prev = u_prev;
    return m;
  }
  void applied(const Vector& u_prev, const Vector& u_now) override {
    pred_.advance(u_prev, u_now);
  }
  const ParallelPredictor& predictor() const { return pred_; }

 private:
  ParallelPredictor pred_;
  std::vector<Vector> ybar_;
  Matrix readout_;
};

struct ClosedLoopScenario {
  Vector rho;           // one value per step
  Matrix reference;     // tracked deviations, n_tracked x n
  Matrix disturbance;   // input deviations, n_u x n (controlled rows ignored)
};

struct ClosedLoopResult {
  double J = 0.0;
  Vector stage_cost;
  Matrix y;  // tracked output deviations
  Matrix u;  // absolute inputs
  Matrix reference;
  Vector rho;
  double max_condensation_error = 0.0;
  double max_kkt_residual = 0.0;
};

// Plant trims interpolated at rho (grid trims from settling runs).
struct PlantTrimTable {
  std::vector<double> grid;
  std::vector<Trim> trims;
  Trim at(double rho) const {
    const auto g = locate(grid, rho);
    const size_t a = g.index, b = std::min(a + 1, trims.size() - 1);
    const double t = trims.size() == 1 ? 0.0 : g.weight;
    return Trim{lerp(trims[a].x, trims[b].x, t), lerp(trims[a].u, trims[b].u, t),
                lerp(trims[a].y, trims[b].y, t)};
  }
};

inline ClosedLoopResult closed_loop_run(const HighOrderPlant& plant,
                                        const PlantTrimTable& trims,
                                        RomController& ctrl,
                                        const ClosedLoopScenario& sc,
                                        const MpcConfig& cfg) {
  validate(cfg);
  if (plant.has_algebraic_output())
    throw ConfigError("closed loop assumes P = 0 in the plant");
  const Eigen::Index n = sc.rho.size();
  const Eigen::Index nc = static_cast<Eigen::Index>(cfg.controlled.size());
  const Eigen::Index nt = static_cast<Eigen::Index>(cfg.tracked.size());
  if (sc.reference.rows() != nt || sc.reference.cols() != n ||
      sc.disturbance.rows() != plant.n_u() || sc.disturbance.cols() != n)
    throw DimensionError("closed-loop scenario dimensions");
  const Matrix Sel = detail::selector(cfg.controlled, plant.n_u());

  ClosedLoopResult out;
  out.stage_cost.resize(n);
  out.y.resize(nt, n);
  out.u.resize(plant.n_u(), n);
  out.reference = sc.reference;
  out.rho = sc.rho;

  const Trim t0 = trims.at(sc.rho(0));
  Vector x_prev = t0.x;
  Vector u_prev = t0.u;
  Vector du_prev = Vector::Zero(nc);
  ctrl.reset(x_prev);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double rho = sc.rho(k);
    const Trim tk = trims.at(rho);
    HorizonModel m = ctrl.model(rho, x_prev, u_prev);
    m.base = tk.u + sc.disturbance.col(k);
    for (int c : cfg.controlled) m.base(c) = m.ubar(c);
    Matrix ref(nt, cfg.horizon);
    for (int i = 0; i < cfg.horizon; ++i)
      ref.col(i) = sc.reference.col(std::min<Eigen::Index>(k + i, n - 1));
    const HorizonSolution s = solve_horizon(m, du_prev, ref, cfg);
    out.max_condensation_error =
        std::max(out.max_condensation_error, s.condensation_error);
    out.max_kkt_residual = std::max(out.max_kkt_residual, s.kkt_residual);

    Vector u = tk.u + sc.disturbance.col(k);
    const Vector du = s.U.head(nc);
    for (Eigen::Index c = 0; c < nc; ++c)
      u(cfg.controlled[c]) = m.ubar(cfg.controlled[c]) + du(c);
    const double rho_prev = k == 0 ? rho : sc.rho(k - 1);
    const Vector x = plant.at(rho_prev).step(x_prev, u_prev, u);
    ctrl.applied(u_prev, u);

    const Vector y = plant.at(rho).output(x, u, u) - tk.y;
    Vector yt(nt);
    for (Eigen::Index t = 0; t < nt; ++t) yt(t) = y(cfg.tracked[t]);
    const Vector du_applied = Sel * (u - tk.u);
    const Vector e = yt - sc.reference.col(k);
    const Vector dd = du_applied - du_prev;
    const double stage = e.dot(cfg.N * e) + du_applied.dot(cfg.M * du_applied) +
                         dd.dot(cfg.M_delta * dd);
    out.stage_cost(k) = stage;
    out.J += stage;
    out.y.col(k) = yt;
    out.u.col(k) = u;
    x_prev = x;
    u_prev = u;
    du_prev = du_applied;
  }
  return out;
}

struct MpcScenarioSpec {
  int n_steps = 600;
  double speed_from = 27.0;
  double speed_to = 50.0;
  int ramp_steps = 400;
  double gust_length_s = 0.5;
  double gust_amplitude = 1.0;  // degrees on the angle-of-attack channel
  int gust_channel = 0;
  double gust_start_s = -1.0;   // < 0: shortly after the speed tops out
  double turbulence_sigma = 0.05;
  double turbulence_corner_hz = 2.0;
  // Reference amplitude as a fraction of the output reachable at the bound.
  double reference_fraction = 0.5;
  std::uint64_t seed = 1;
};

inline double smoothstep01(double s) {
  s = std::clamp(s, 0.0, 1.0);
  return 0.5 * (1.0 - std::cos(std::numbers::pi * s));
}

// Piecewise-smooth tracking profile in [-0.5, 1] scaled by the static gain.
inline ClosedLoopScenario make_mpc_scenario(const HighOrderPlant& plant,
                                            const MpcScenarioSpec& sp,
                                            const MpcConfig& cfg) {
  validate(cfg);
  const int n = sp.n_steps;
  if (n < 2 || sp.ramp_steps < 1) throw ConfigError("scenario too short");
  ClosedLoopScenario sc;
  sc.rho.resize(n);
  for (int k = 0; k < n; ++k) {
    const double s = std::min(1.0, static_cast<double>(k) / sp.ramp_steps);
    sc.rho(k) = k >= sp.ramp_steps ? sp.speed_to
                                   : sp.speed_from + (sp.speed_to - sp.speed_from) * s;
  }
  const double dt = plant.dt;
  const double mid = 0.5 * (sp.speed_from + sp.speed_to);
  const StateSpace sys = plant.at(mid);
  const Matrix I = Matrix::Identity(sys.n_x(), sys.n_x());
  const Matrix gain = sys.C * (I - sys.A).partialPivLu().solve(sys.B + sys.R) + sys.D + sys.P;
  const Eigen::Index nt = static_cast<Eigen::Index>(cfg.tracked.size());
  sc.reference.resize(nt, n);
  for (Eigen::Index t = 0; t < nt; ++t) {
    double g = 0.0;
    for (size_t c = 0; c < cfg.controlled.size(); ++c)
      g = std::max(g, std::abs(gain(cfg.tracked[t], cfg.controlled[c])) *
                          cfg.u_max(static_cast<Eigen::Index>(c)));
    const double amp = sp.reference_fraction * g;
    for (int k = 0; k < n; ++k) {
      const double tt = k * dt;
      const double p = smoothstep01((tt - 0.3) / 0.3) -
                       1.5 * smoothstep01((tt - 1.4) / 0.3) +
                       smoothstep01((tt - 2.4) / 0.3);
      sc.reference(t, k) = amp * p;
    }
  }
  sc.disturbance = Matrix::Zero(plant.n_u(), n);
  double start = sp.gust_start_s;
  if (start < 0.0) start = (sp.ramp_steps + 10) * dt;
  sc.disturbance.row(sp.gust_channel) =
      gust_one_cosine(sp.gust_length_s, sp.gust_amplitude, dt, n, start).transpose();
  if (sp.turbulence_sigma > 0.0)
    sc.disturbance.row(sp.gust_channel) +=
        filtered_noise(sp.turbulence_sigma, sp.turbulence_corner_hz, dt, n, sp.seed)
            .transpose();
  return sc;
}

}  // namespace bmdrom
