#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "bmdrom/errors.hpp"
#include "bmdrom/linalg.hpp"
#include "bmdrom/reduced_model.hpp"
#include "bmdrom/snapshots.hpp"

namespace bmdrom {

// Discrete LTI system with the algebraic next-input terms:
//   x+ = A x + B u + R u+,  y = C x + D u + P u+
struct StateSpace {
  Matrix A, B, C, D, R, P;

  Eigen::Index n_x() const { return A.rows(); }
  Eigen::Index n_u() const { return B.cols(); }
  Eigen::Index n_y() const { return C.rows(); }

  Vector step(const Vector& x, const Vector& u, const Vector& u_next) const {
    return A * x + B * u + R * u_next;
  }
  Vector output(const Vector& x, const Vector& u, const Vector& u_next) const {
    return C * x + D * u + P * u_next;
  }
  // (A^T, C^T, B^T, D^T) with the algebraic terms dropped.
  StateSpace adjoint() const {
    StateSpace s;
    s.A = A.transpose();
    s.B = C.transpose();
    s.C = B.transpose();
    s.D = D.transpose();
    s.R = Matrix::Zero(s.A.rows(), s.B.cols());
    s.P = Matrix::Zero(s.C.rows(), s.B.cols());
    return s;
  }
};

inline StateSpace lerp_system(const StateSpace& a, const StateSpace& b,
                              double t) {
  return StateSpace{lerp(a.A, b.A, t), lerp(a.B, b.B, t), lerp(a.C, b.C, t),
                    lerp(a.D, b.D, t), lerp(a.R, b.R, t), lerp(a.P, b.P, t)};
}

struct HighOrderPlant {
  std::vector<double> grid_rhos;
  std::vector<StateSpace> systems;
  // Held input defining the equilibrium at each grid point.
  std::vector<Vector> trim_inputs;
  double dt = 0.006;

  Eigen::Index n_x() const { return systems.front().n_x(); }
  Eigen::Index n_u() const { return systems.front().n_u(); }
  Eigen::Index n_y() const { return systems.front().n_y(); }

  StateSpace at(double rho) const {
    const auto g = locate(grid_rhos, rho);
    if (g.weight == 0.0) return systems[g.index];
    if (g.weight == 1.0) return systems[g.index + 1];
    return lerp_system(systems[g.index], systems[g.index + 1], g.weight);
  }
  Vector trim_input(double rho) const {
    return lerp_at(trim_inputs, locate(grid_rhos, rho));
  }
  Vector step(const Vector& x, const Vector& u, const Vector& u_next,
              double rho) const {
    return at(rho).step(x, u, u_next);
  }
  Vector output(const Vector& x, const Vector& u, const Vector& u_next,
                double rho) const {
    return at(rho).output(x, u, u_next);
  }
  bool has_algebraic_output() const {
    for (const auto& s : systems)
      if (s.P.norm() != 0.0) return true;
    return false;
  }
};

inline void validate(const HighOrderPlant& p) {
  if (p.grid_rhos.size() < 2) throw ConfigError("plant grid needs >= 2 points");
  if (p.systems.size() != p.grid_rhos.size() ||
      p.trim_inputs.size() != p.grid_rhos.size())
    throw DimensionError("plant grid and matrix list lengths differ");
  for (size_t j = 1; j < p.grid_rhos.size(); ++j)
    if (!(p.grid_rhos[j] > p.grid_rhos[j - 1]))
      throw ConfigError("plant grid must be strictly increasing");
  const auto& s0 = p.systems.front();
  for (const auto& s : p.systems) {
    if (s.A.rows() != s0.n_x() || s.A.cols() != s0.n_x() ||
        s.B.rows() != s0.n_x() || s.B.cols() != s0.n_u() ||
        s.C.rows() != s0.n_y() || s.C.cols() != s0.n_x() ||
        s.D.rows() != s0.n_y() || s.D.cols() != s0.n_u() ||
        s.R.rows() != s0.n_x() || s.R.cols() != s0.n_u() ||
        s.P.rows() != s0.n_y() || s.P.cols() != s0.n_u())
      throw DimensionError("plant grid matrices do not share dimensions");
  }
  for (const auto& u : p.trim_inputs)
    if (u.size() != s0.n_u()) throw DimensionError("trim input size");
}

// Oscillators with a common participation weight and damping range.
struct ModeGroup {
  int count = 0;
  double zeta_lo = 0.03;
  double zeta_hi = 0.1;
  double weight = 1.0;
};

struct PlantConfig {
  int n_x = 200;
  int n_u = 6;
  int n_y = 2;
  std::vector<double> grid_rhos;
  double dt = 0.006;
  // Used when `groups` is empty: one group with unit weight.
  double modal_damping_lo = 0.03;
  double modal_damping_hi = 0.7;
  std::vector<ModeGroup> groups = {{10, 0.03, 0.1, 1.0},
                                   {8, 0.3, 0.7, 3.0},
                                   {82, 0.3, 0.7, 0.01}};
  double nonnormal_coupling_strength = 0.1;
  bool algebraic = true;
  std::uint64_t seed = 7;
  double freq_lo_hz = 4.0;
  double freq_hi_hz = 60.0;
  // Mode 0 is the tracked "first bending" mode, read directly by output 0.
  double first_mode_hz = 10.0;
  double first_mode_zeta = 0.05;
  // Relative change of frequency and damping across the grid range.
  double freq_variation = 0.3;
  double damping_variation = 0.4;
  double trim_amplitude = 1.0;
  // Input acting on the first state only, with no algebraic term, so the
  // path to output 0 has no zeros outside the unit circle. -1 disables.
  int control_channel = 4;
};

inline std::vector<double> grid_range(double lo, double hi, double step) {
  std::vector<double> g;
  const int n = static_cast<int>(std::floor((hi - lo) / step + 1e-9)) + 1;
  for (int i = 0; i < n; ++i) g.push_back(lo + step * i);
  return g;
}

inline HighOrderPlant make_benchmark_plant(const PlantConfig& cfg) {
  const int nb = cfg.n_x / 2;
  if (cfg.n_x < 2 || cfg.n_x % 2 != 0)
    throw ConfigError("n_x must be a positive even number of oscillator states");
  if (cfg.n_u < 1 || cfg.n_y < 1) throw ConfigError("n_u, n_y must be >= 1");
  if (cfg.grid_rhos.size() < 2) throw ConfigError("plant grid needs >= 2 points");
  std::vector<ModeGroup> groups = cfg.groups;
  if (groups.empty())
    groups = {{nb, cfg.modal_damping_lo, cfg.modal_damping_hi, 1.0}};
  int total = 0;
  for (const auto& g : groups) total += g.count;
  if (total != nb)
    throw ConfigError("mode groups must cover n_x/2 = " + std::to_string(nb) +
                      " oscillators, got " + std::to_string(total));

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto log_uniform = [&](double lo, double hi) {
    return std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * unif(rng));
  };
  auto randn = [&](int r, int c) {
    Matrix M(r, c);
    for (int j = 0; j < c; ++j)
      for (int i = 0; i < r; ++i) M(i, j) = normal(rng);
    return M;
  };

  Vector f0(nb), z0(nb), w(nb);
  for (int b = 0; b < nb; ++b) f0(b) = log_uniform(cfg.freq_lo_hz, cfg.freq_hi_hz);
  f0(0) = cfg.first_mode_hz;
  {
    int b = 0;
    for (const auto& g : groups)
      for (int i = 0; i < g.count; ++i, ++b) {
        z0(b) = log_uniform(g.zeta_lo, g.zeta_hi);
        w(b) = g.weight;
      }
  }
  z0(0) = cfg.first_mode_zeta;

  if (cfg.control_channel >= cfg.n_u) throw ConfigError("control_channel must be < n_u");
  Matrix B0 = randn(cfg.n_x, cfg.n_u);
  for (int i = 0; i < cfg.n_x; ++i) B0.row(i) *= w(i / 2);
  if (cfg.control_channel >= 0) {
    const double c = B0.col(cfg.control_channel).norm();
    B0.col(cfg.control_channel).setZero();
    B0(0, cfg.control_channel) = c;
  }
  B0 *= std::sqrt(static_cast<double>(cfg.n_u)) / B0.norm();
  const Matrix B1 = 0.3 * B0;

  Matrix C = randn(cfg.n_y, cfg.n_x) / std::sqrt(static_cast<double>(cfg.n_x));
  C.row(0).setZero();
  C(0, 0) = 1.0;

  // strictly upper block-triangular, so the designed poles stay exact
  Matrix N = randn(cfg.n_x, cfg.n_x) *
             (cfg.nonnormal_coupling_strength /
              std::sqrt(static_cast<double>(cfg.n_x)));
  for (int i = 0; i < cfg.n_x; ++i)
    for (int j = 0; j < cfg.n_x; ++j)
      if (j / 2 <= i / 2) N(i, j) = 0.0;

  Matrix Rraw = randn(cfg.n_x, cfg.n_u);
  if (cfg.control_channel >= 0) Rraw.col(cfg.control_channel).setZero();
  Vector ubar0(cfg.n_u), ubar1(cfg.n_u);
  for (int i = 0; i < cfg.n_u; ++i) ubar0(i) = normal(rng) * cfg.trim_amplitude;
  for (int i = 0; i < cfg.n_u; ++i)
    ubar1(i) = normal(rng) * cfg.trim_amplitude * 0.4;

  HighOrderPlant p;
  p.grid_rhos = cfg.grid_rhos;
  p.dt = cfg.dt;
  const double lo = cfg.grid_rhos.front(), hi = cfg.grid_rhos.back();
  for (double rho : cfg.grid_rhos) {
    const double s = (rho - 0.5 * (lo + hi)) / (hi - lo);
    Matrix A = Matrix::Zero(cfg.n_x, cfg.n_x);
    for (int b = 0; b < nb; ++b) {
      const double f = f0(b) * (1.0 + cfg.freq_variation * s);
      const double z =
          std::min(z0(b) * (1.0 - cfg.damping_variation * s), 0.95);
      const double om = 2.0 * std::numbers::pi * f;
      const double r = std::exp(-z * om * cfg.dt);
      const double th = om * std::sqrt(1.0 - z * z) * cfg.dt;
      A(2 * b, 2 * b) = r * std::cos(th);
      A(2 * b, 2 * b + 1) = -r * std::sin(th);
      A(2 * b + 1, 2 * b) = r * std::sin(th);
      A(2 * b + 1, 2 * b + 1) = r * std::cos(th);
    }
    A += N;
    StateSpace sys;
    sys.B = B0 + s * B1;
    sys.C = C;
    sys.D = Matrix::Zero(cfg.n_y, cfg.n_u);
    sys.R = cfg.algebraic ? Matrix(Rraw * (0.1 * sys.B.norm() / Rraw.norm()))
                          : Matrix::Zero(cfg.n_x, cfg.n_u);
    sys.P = Matrix::Zero(cfg.n_y, cfg.n_u);
    double rad = spectral_radius(A);
    for (int attempt = 0; attempt < 3 && rad >= 1.0; ++attempt) {
      A *= 0.999 / rad;
      rad = spectral_radius(A);
    }
    if (rad >= 1.0)
      throw NumericalError("benchmark plant unstable at rho=" +
                           std::to_string(rho));
    sys.A = std::move(A);
    p.systems.push_back(std::move(sys));
    p.trim_inputs.push_back(ubar0 + s * ubar1);
  }
  return p;
}

// Steps the plant with per-sample parameters. The input after the last
// sample is held (u_{n_s+1} := u_{n_s}). Trim is left zero for the caller.
inline TrajectorySet simulate(const HighOrderPlant& plant, const Matrix& u,
                              const Vector& rho_traj, const Vector& x0) {
  const Eigen::Index n = u.cols();
  if (rho_traj.size() != n)
    throw DimensionError("input and parameter sequences differ in length");
  if (u.rows() != plant.n_u() || x0.size() != plant.n_x())
    throw DimensionError("simulate: input or state dimension mismatch");
  if (n < 1) throw DimensionError("simulate: empty input sequence");
  TrajectorySet t;
  t.states.resize(plant.n_x(), n);
  t.outputs.resize(plant.n_y(), n);
  t.inputs = u;
  t.dt = plant.dt;
  t.rho = rho_traj(0);
  t.rho_traj = rho_traj;
  t.trim = Trim{Vector::Zero(plant.n_x()), Vector::Zero(plant.n_u()),
                Vector::Zero(plant.n_y())};
  Vector x = x0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const StateSpace s = plant.at(rho_traj(k));
    const Vector u_next = u.col(std::min(k + 1, n - 1));
    t.states.col(k) = x;
    t.outputs.col(k) = s.output(x, u.col(k), u_next);
    if (k + 1 < n) x = s.step(x, u.col(k), u_next);
  }
  return t;
}

inline TrajectorySet simulate_frozen(const HighOrderPlant& plant,
                                     const Matrix& u, double rho,
                                     const Vector& x0) {
  auto t = simulate(plant, u, Vector::Constant(u.cols(), rho), x0);
  t.rho_traj.resize(0);
  return t;
}

struct BalancedTruncation {
  ReducedModel model;
  Vector hankel;
};

// Model-based square-root balanced truncation at one grid point. Uses exact
// Lyapunov Gramians and eigen square-root factors.
inline BalancedTruncation balanced_truncation_oracle(const StateSpace& sys,
                                                     int n_z) {
  if (n_z < 1 || n_z > sys.n_x()) throw ConfigError("n_z outside [1, n_x]");
  if (sys.R.norm() != 0.0 || sys.P.norm() != 0.0)
    throw ConfigError("balanced truncation oracle needs R = 0 and P = 0");
  if (spectral_radius(sys.A) >= 1.0)
    throw NumericalError("balanced truncation oracle: unstable system");
  const Matrix Wc = dlyap(sys.A, sys.B * sys.B.transpose());
  const Matrix Wo = dlyap(sys.A.transpose(), sys.C.transpose() * sys.C);
  const Matrix Lc = eig_sqrt_factor(Wc, "Wc");
  const Matrix Lo = eig_sqrt_factor(Wo, "Wo");
  Eigen::BDCSVD<Matrix> svd(Lc.transpose() * Lo,
                               Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  if (s(n_z - 1) <= 1e-14 * s(0))
    throw RankError("balanced truncation: Hankel value is numerically zero",
                    n_z - 1);
  const Vector isq = s.head(n_z).cwiseSqrt().cwiseInverse();
  const Matrix Tr = Lc * svd.matrixU().leftCols(n_z) * isq.asDiagonal();
  const Matrix Tl = Lo * svd.matrixV().leftCols(n_z) * isq.asDiagonal();
  BalancedTruncation out;
  out.hankel = s;
  auto& m = out.model;
  m.F = Tl.transpose() * sys.A * Tr;
  m.G = Tl.transpose() * sys.B;
  m.H = sys.C * Tr;
  m.D = sys.D;
  m.lift = Tr;
  m.test = Tl;
  return out;
}

inline BalancedTruncation balanced_truncation_oracle(const HighOrderPlant& p,
                                                     int grid_index, int n_z) {
  if (grid_index < 0 || grid_index >= static_cast<int>(p.systems.size()))
    throw RangeError("grid index out of range");
  auto bt = balanced_truncation_oracle(p.systems[grid_index], n_z);
  bt.model.rho = p.grid_rhos[grid_index];
  return bt;
}

// Markov parameters D, H G, H F G, ... stacked vertically (count blocks).
inline Matrix markov_parameters(const Matrix& F, const Matrix& G,
                                const Matrix& H, const Matrix& D, int count) {
  Matrix out(count * H.rows(), G.cols());
  out.topRows(H.rows()) = D;
  Matrix X = G;
  for (int k = 1; k < count; ++k) {
    out.middleRows(k * H.rows(), H.rows()) = H * X;
    X = F * X;
  }
  return out;
}

}  // namespace bmdrom
