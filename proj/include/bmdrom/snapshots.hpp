#pragma once

#include <string>

#include "bmdrom/errors.hpp"
#include "bmdrom/linalg.hpp"

namespace bmdrom {

struct Trim {
  Vector x;
  Vector u;
  Vector y;
};

// Recorded samples x_0..x_{n_s}, one column per step.
struct TrajectorySet {
  Matrix states;
  Matrix inputs;
  Matrix outputs;
  double dt = 0.0;
  double rho = 0.0;
  Trim trim;
  // Per-sample parameter when the recording was not frozen; empty otherwise.
  Vector rho_traj;

  Eigen::Index n_s() const { return states.cols() - 1; }
};

struct SnapshotSet {
  Matrix X0, X1, U0, U1, Y0;
  double rho = 0.0;
  Trim trim;
};

inline void validate(const TrajectorySet& t) {
  const auto n = t.states.cols();
  if (n < 2) throw DimensionError("trajectory needs at least 2 samples");
  if (t.inputs.cols() != n || t.outputs.cols() != n)
    throw DimensionError("state/input/output sample counts differ");
  if (!(t.dt > 0.0)) throw DimensionError("dt must be positive");
  if (t.trim.x.size() != t.states.rows() ||
      t.trim.u.size() != t.inputs.rows() ||
      t.trim.y.size() != t.outputs.rows())
    throw DimensionError("trim dimensions do not match the trajectory");
  if (t.rho_traj.size() != 0 && t.rho_traj.size() != n)
    throw DimensionError("parameter trajectory length mismatch");
}

inline SnapshotSet build_snapshots(const TrajectorySet& traj) {
  validate(traj);
  const Eigen::Index ns = traj.n_s();
  SnapshotSet s;
  s.X0 = traj.states.leftCols(ns).colwise() - traj.trim.x;
  s.X1 = traj.states.rightCols(ns).colwise() - traj.trim.x;
  s.U0 = traj.inputs.leftCols(ns).colwise() - traj.trim.u;
  s.U1 = traj.inputs.rightCols(ns).colwise() - traj.trim.u;
  s.Y0 = traj.outputs.leftCols(ns).colwise() - traj.trim.y;
  s.rho = traj.rho;
  s.trim = traj.trim;
  return s;
}

struct TrimOptions {
  double tol = 1e-10;
};

// Settles `plant` at frozen rho under its held trim input. Plant needs
// trim_input(rho), step(x, u, u_next, rho), output(x, u, u_next, rho), n_x().
template <class Plant>
Trim compute_trim(const Plant& plant, double rho, int settle_steps,
                  const TrimOptions& opt = {}) {
  if (settle_steps < 1) throw ConfigError("settle_steps must be >= 1");
  const Vector u = plant.trim_input(rho);
  Vector x = Vector::Zero(plant.n_x());
  double inc = std::numeric_limits<double>::infinity();
  for (int k = 0; k < settle_steps; ++k) {
    Vector xn = plant.step(x, u, u, rho);
    inc = (xn - x).norm();
    x = std::move(xn);
    if (!std::isfinite(inc)) break;
    if (inc < opt.tol) return Trim{x, u, plant.output(x, u, u, rho)};
  }
  throw NotSettledError("trim did not settle at rho=" + std::to_string(rho),
                        inc);
}

}  // namespace bmdrom
