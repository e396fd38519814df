#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "bmdrom/errors.hpp"
#include "bmdrom/linalg.hpp"
#include "bmdrom/parallel.hpp"
#include "bmdrom/plant.hpp"

namespace bmdrom {

enum class ObservabilityMethod { adjoint_impulse, perturbation };

inline std::string to_string(ObservabilityMethod m) {
  return m == ObservabilityMethod::adjoint_impulse ? "adjoint_impulse"
                                                   : "perturbation";
}

inline ObservabilityMethod observability_method_from(const std::string& s) {
  if (s == "adjoint_impulse" || s == "adjoint")
    return ObservabilityMethod::adjoint_impulse;
  if (s == "perturbation") return ObservabilityMethod::perturbation;
  throw ConfigError("unknown observability method '" + s + "'");
}

struct GramianPair {
  Matrix Wc;
  Matrix Wo;
  int horizon = 0;
  ObservabilityMethod method_o = ObservabilityMethod::adjoint_impulse;
  // Set when the horizon leaves a response tail above 1e-6 of its peak.
  bool truncation_warning = false;
};

// Smallest T with r_max^T below `decay`.
inline int default_horizon(double r_max, double decay = 1e-6) {
  if (!(r_max > 0.0 && r_max < 1.0))
    throw ConfigError("default horizon needs a pole radius in (0, 1)");
  return static_cast<int>(std::ceil(std::log(decay) / std::log(r_max)));
}

inline constexpr double kTailFraction = 1e-6;

// Unit impulse on channel i arriving at step 1 from rest, so R acts one
// step before B. States x_1..x_{T+1} are collected; with R = 0 this is
// sum_{k<T} A^k B B^T A^T^k. Sim needs n_x(), n_u(), step(x, u, u_next).
template <class Sim>
Matrix empirical_controllability(const Sim& sim, int horizon, int jobs = 1,
                                 bool* warning = nullptr) {
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  const Eigen::Index nx = sim.n_x(), nu = sim.n_u();
  std::vector<Matrix> parts(nu);
  std::vector<char> warn(nu, 0);
  parallel_for(static_cast<int>(nu), jobs, [&](int i) {
    Matrix X(nx, horizon + 1);
    const Vector zero_u = Vector::Zero(nu);
    const Vector e = Vector::Unit(nu, i);
    Vector x = sim.step(Vector::Zero(nx), zero_u, e);
    X.col(0) = x;
    x = sim.step(x, e, zero_u);
    X.col(1) = x;
    for (int k = 2; k <= horizon; ++k) {
      x = sim.step(x, zero_u, zero_u);
      X.col(k) = x;
    }
    if (!X.allFinite()) throw NumericalError("impulse response diverged");
    const double peak = X.colwise().norm().maxCoeff();
    warn[i] = X.col(horizon).norm() > kTailFraction * peak;
    parts[i] = X * X.transpose();
  });
  Matrix W = Matrix::Zero(nx, nx);
  bool any = false;
  for (Eigen::Index i = 0; i < nu; ++i) {
    W += parts[i];
    any = any || warn[i];
  }
  if (warning) *warning = *warning || any;
  return W;
}

// Perturbation route: zero-input output records y_0..y_{T-1} from each unit
// initial state. Needs n_x(), n_u(), n_y(), step(), output().
template <class Sim>
Matrix empirical_observability_perturbation(const Sim& sim, int horizon,
                                            int jobs = 1,
                                            bool* warning = nullptr) {
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  const Eigen::Index nx = sim.n_x(), nu = sim.n_u(), ny = sim.n_y();
  Matrix Gamma(ny * horizon, nx);
  std::vector<char> warn(nx, 0);
  parallel_for(static_cast<int>(nx), jobs, [&](int i) {
    const Vector zero_u = Vector::Zero(nu);
    Vector x = Vector::Unit(nx, i);
    double peak = 0.0, tail = 0.0;
    for (int k = 0; k < horizon; ++k) {
      const Vector y = sim.output(x, zero_u, zero_u);
      Gamma.block(k * ny, i, ny, 1) = y;
      peak = std::max(peak, y.norm());
      tail = y.norm();
      x = sim.step(x, zero_u, zero_u);
    }
    warn[i] = tail > kTailFraction * peak;
  });
  if (!Gamma.allFinite()) throw NumericalError("free response diverged");
  bool any = false;
  for (char w : warn) any = any || w;
  if (warning) *warning = *warning || any;
  return Gamma.transpose() * Gamma;
}

inline Matrix empirical_observability(const StateSpace& sys, int horizon,
                                      ObservabilityMethod method, int jobs = 1,
                                      bool* warning = nullptr) {
  if (method == ObservabilityMethod::adjoint_impulse)
    return empirical_controllability(sys.adjoint(), horizon, jobs, warning);
  return empirical_observability_perturbation(sys, horizon, jobs, warning);
}

inline GramianPair empirical_gramians(
    const StateSpace& sys, int horizon,
    ObservabilityMethod method = ObservabilityMethod::adjoint_impulse,
    int jobs = 1) {
  GramianPair g;
  g.horizon = horizon;
  g.method_o = method;
  g.Wc = empirical_controllability(sys, horizon, jobs, &g.truncation_warning);
  g.Wo = empirical_observability(sys, horizon, method, jobs,
                                 &g.truncation_warning);
  return g;
}

inline double max_pole_radius(const HighOrderPlant& p) {
  double r = 0.0;
  for (const auto& s : p.systems) r = std::max(r, spectral_radius(s.A));
  return r;
}

}  // namespace bmdrom
