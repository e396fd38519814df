#pragma once

#include <string>
#include <vector>

#include "bmdrom/errors.hpp"
#include "bmdrom/linalg.hpp"
#include "bmdrom/plant.hpp"
#include "bmdrom/reduced_model.hpp"
#include "bmdrom/snapshots.hpp"

namespace bmdrom {

enum class Algorithm { dmdc, admdc, iorom, bmd, exact };

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::dmdc: return "dmdc";
    case Algorithm::admdc: return "admdc";
    case Algorithm::iorom: return "iorom";
    case Algorithm::bmd: return "bmd";
    case Algorithm::exact: return "exact";
  }
  return "?";
}

inline Algorithm algorithm_from(const std::string& s) {
  if (s == "dmdc") return Algorithm::dmdc;
  if (s == "admdc") return Algorithm::admdc;
  if (s == "iorom") return Algorithm::iorom;
  if (s == "bmd") return Algorithm::bmd;
  if (s == "exact") return Algorithm::exact;
  throw ConfigError("unknown algorithm '" + s + "'");
}

struct GridROM {
  std::vector<double> grid_rhos;
  std::vector<ReducedModel> models;
  std::vector<Vector> zbar, ubar, ybar;
  // Full-state trims; empty when not attached.
  std::vector<Vector> xbar;
  Algorithm algorithm = Algorithm::bmd;
  double dt = 0.0;

  Eigen::Index n_z() const { return models.front().n_z(); }
  Eigen::Index n_u() const { return models.front().n_u(); }
  Eigen::Index n_y() const { return models.front().n_y(); }
  size_t size() const { return models.size(); }
};

inline void validate(const GridROM& g) {
  const size_t n = g.grid_rhos.size();
  if (n == 0) throw DimensionError("GridROM has no grid points");
  if (g.models.size() != n || g.zbar.size() != n || g.ubar.size() != n ||
      g.ybar.size() != n || (!g.xbar.empty() && g.xbar.size() != n))
    throw DimensionError("GridROM lists differ in length");
  for (size_t j = 1; j < n; ++j)
    if (!(g.grid_rhos[j] > g.grid_rhos[j - 1]))
      throw ConfigError("GridROM grid must be strictly increasing");
  const auto& m0 = g.models[0];
  for (const auto& m : g.models) {
    if (m.F.rows() != m0.n_z() || m.F.cols() != m0.n_z() ||
        m.G.rows() != m0.n_z() || m.G.cols() != m0.n_u() ||
        m.H.rows() != m0.n_y() || m.H.cols() != m0.n_z() ||
        m.D.rows() != m0.n_y() || m.D.cols() != m0.n_u() ||
        m.L.rows() != m0.n_z() || m.L.cols() != m0.n_u() ||
        m.P.rows() != m0.n_y() || m.P.cols() != m0.n_u())
      throw DimensionError("GridROM models do not share dimensions");
  }
  if (g.algorithm == Algorithm::iorom || g.algorithm == Algorithm::bmd) {
    for (const auto& m : g.models)
      if (m.lift.rows() != m0.lift.rows() || m.lift.cols() != m0.lift.cols() ||
          m.lift != m0.lift)
        throw ConfigError("state-consistent GridROM needs one shared lift");
  }
}

// z-bar = test^T x-bar at each grid point; all optional blocks zero-filled.
inline GridROM make_grid_rom(Algorithm alg, const std::vector<ReducedModel>& models,
                             const std::vector<SnapshotSet>& snaps, double dt) {
  if (models.size() != snaps.size())
    throw DimensionError("model and snapshot lists differ in length");
  GridROM g;
  g.algorithm = alg;
  g.dt = dt;
  const Eigen::Index ny = snaps.front().Y0.rows();
  for (size_t j = 0; j < models.size(); ++j) {
    g.grid_rhos.push_back(snaps[j].rho);
    g.models.push_back(completed(models[j], ny));
    g.zbar.push_back(models[j].test.transpose() * snaps[j].trim.x);
    g.ubar.push_back(snaps[j].trim.u);
    g.ybar.push_back(snaps[j].trim.y);
    g.xbar.push_back(snaps[j].trim.x);
  }
  validate(g);
  return g;
}

// The plant itself as a grid model (lift = test = I).
inline GridROM exact_grid_rom(const HighOrderPlant& p,
                              const std::vector<Trim>& trims) {
  if (trims.size() != p.grid_rhos.size())
    throw DimensionError("one trim per plant grid point expected");
  GridROM g;
  g.algorithm = Algorithm::exact;
  g.dt = p.dt;
  g.grid_rhos = p.grid_rhos;
  const Matrix I = Matrix::Identity(p.n_x(), p.n_x());
  for (size_t j = 0; j < trims.size(); ++j) {
    const auto& s = p.systems[j];
    ReducedModel m;
    m.F = s.A;
    m.G = s.B;
    m.H = s.C;
    m.D = s.D;
    m.L = s.R;
    m.P = s.P;
    m.lift = I;
    m.test = I;
    m.rho = p.grid_rhos[j];
    g.models.push_back(std::move(m));
    g.zbar.push_back(trims[j].x);
    g.ubar.push_back(trims[j].u);
    g.ybar.push_back(trims[j].y);
    g.xbar.push_back(trims[j].x);
  }
  validate(g);
  return g;
}

struct FrozenROM {
  Matrix F, G, H, D, L, P;
  Vector zbar, ubar, ybar;
};

inline FrozenROM interpolate_at(const GridROM& g, double rho) {
  const auto loc = locate(g.grid_rhos, rho);
  if (g.size() == 1 || loc.weight == 0.0 || loc.weight == 1.0) {
    const size_t j = g.size() == 1 ? 0 : loc.index + (loc.weight == 1.0);
    const auto& m = g.models[j];
    return FrozenROM{m.F, m.G, m.H, m.D, m.L, m.P,
                     g.zbar[j], g.ubar[j], g.ybar[j]};
  }
  const auto& a = g.models[loc.index];
  const auto& b = g.models[loc.index + 1];
  const double t = loc.weight;
  return FrozenROM{lerp(a.F, b.F, t),       lerp(a.G, b.G, t),
                   lerp(a.H, b.H, t),       lerp(a.D, b.D, t),
                   lerp(a.L, b.L, t),       lerp(a.P, b.P, t),
                   lerp_at(g.zbar, loc),    lerp_at(g.ubar, loc),
                   lerp_at(g.ybar, loc)};
}

struct LpvSimulation {
  Matrix Z;  // reduced deviation states
  Matrix Y;  // absolute outputs
  Matrix X;  // lifted absolute states (empty without full-state trims)
};

// u holds absolute inputs. Both u_k and u_{k+1} are taken as deviations
// from the trim at rho_k; the final input and parameter are held.
inline LpvSimulation simulate_lpv(const GridROM& g, const Matrix& u,
                                  const Vector& rho_traj, const Vector& z0) {
  const Eigen::Index n = u.cols();
  if (rho_traj.size() != n) throw DimensionError("input/parameter length");
  if (u.rows() != g.n_u() || z0.size() != g.n_z())
    throw DimensionError("simulate_lpv: input or state dimension mismatch");
  const bool lifted = !g.xbar.empty();
  LpvSimulation out;
  out.Z.resize(g.n_z(), n);
  out.Y.resize(g.n_y(), n);
  if (lifted) out.X.resize(g.models[0].lift.rows(), n);
  Vector z = z0;
  FrozenROM cur = interpolate_at(g, rho_traj(0));
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index kn = std::min(k + 1, n - 1);
    const Vector du = u.col(k) - cur.ubar;
    const Vector du_next = u.col(kn) - cur.ubar;
    out.Z.col(k) = z;
    out.Y.col(k) = cur.H * z + cur.D * du + cur.P * du_next + cur.ybar;
    if (lifted) {
      const auto loc = locate(g.grid_rhos, rho_traj(k));
      const size_t a = loc.index;
      const size_t b = std::min(a + 1, g.size() - 1);
      const double t = g.size() == 1 ? 0.0 : loc.weight;
      out.X.col(k) = lerp(g.models[a].lift, g.models[b].lift, t) * z +
                     lerp_at(g.xbar, loc);
    }
    if (k + 1 == n) break;
    FrozenROM nxt = interpolate_at(g, rho_traj(kn));
    z = cur.F * z + cur.G * du + cur.L * du_next + (cur.zbar - nxt.zbar);
    cur = std::move(nxt);
  }
  return out;
}

// Frozen LTI simulation of one model in deviation coordinates (reference
// path for knot-exactness checks).
inline Matrix simulate_frozen_outputs(const ReducedModel& m, const Matrix& du,
                                      const Vector& z0) {
  const Eigen::Index n = du.cols();
  Matrix Y(m.n_y(), n);
  Vector z = z0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index kn = std::min(k + 1, n - 1);
    Y.col(k) = m.H * z + m.D * du.col(k) + m.P * du.col(kn);
    z = m.F * z + m.G * du.col(k) + m.L * du.col(kn);
  }
  return Y;
}

}  // namespace bmdrom
