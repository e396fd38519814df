#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bmdrom/errors.hpp"
#include "bmdrom/gramians.hpp"
#include "bmdrom/linalg.hpp"
#include "bmdrom/lpv.hpp"
#include "bmdrom/mpc.hpp"
#include "bmdrom/parallel.hpp"
#include "bmdrom/plant.hpp"
#include "bmdrom/rom_bmd.hpp"
#include "bmdrom/rom_dmdc.hpp"
#include "bmdrom/rom_iorom.hpp"
#include "bmdrom/signals.hpp"
#include "bmdrom/snapshots.hpp"

// In-memory building blocks of a grid study: trims, training data,
// Gramians, fits across n_z, and the evaluation metrics.
namespace bmdrom {

// splitmix64 step; derives independent stream seeds from one master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::vector<Trim> grid_trims(const HighOrderPlant& plant,
                                    const std::vector<double>& grid,
                                    int settle_steps, const TrimOptions& opt,
                                    int jobs = 1) {
  std::vector<Trim> out(grid.size());
  parallel_for(static_cast<int>(grid.size()), jobs, [&](int j) {
    out[j] = compute_trim(plant, grid[j], settle_steps, opt);
  });
  return out;
}

// One frozen training run per grid point, starting from and excited about
// the trim. Signals with speed-scaled frequencies use the grid value.
inline std::vector<TrajectorySet> training_runs(const HighOrderPlant& plant,
                                                const std::vector<double>& grid,
                                                const std::vector<Trim>& trims,
                                                SignalSpec spec,
                                                std::uint64_t seed,
                                                int jobs = 1) {
  if (trims.size() != grid.size()) throw DimensionError("one trim per grid point");
  spec.n_u = static_cast<int>(plant.n_u());
  spec.dt = plant.dt;
  std::vector<TrajectorySet> out(grid.size());
  parallel_for(static_cast<int>(grid.size()), jobs, [&](int j) {
    SignalSpec s = spec;
    s.seed = derive_seed(seed, static_cast<std::uint64_t>(j));
    const Matrix du = generate(s, grid[j]);
    TrajectorySet t = simulate_frozen(plant, du.colwise() + trims[j].u, grid[j],
                                      trims[j].x);
    t.trim = trims[j];
    out[j] = std::move(t);
  });
  return out;
}

inline std::vector<GramianPair> grid_gramians(const HighOrderPlant& plant,
                                              const std::vector<double>& grid,
                                              int horizon,
                                              ObservabilityMethod method,
                                              int jobs = 1) {
  std::vector<GramianPair> out(grid.size());
  // parallel over grid points; each Gramian runs serially inside
  parallel_for(static_cast<int>(grid.size()), jobs, [&](int j) {
    out[j] = empirical_gramians(plant.at(grid[j]), horizon, method, 1);
  });
  return out;
}

// Everything independent of n_z, prepared once per training set.
struct FitContext {
  std::vector<SnapshotSet> snaps;
  double dt = 0.0;
  bool algebraic = true;
  std::vector<DmdcPrep> dmdc_prep, admdc_prep;
  std::optional<Svd> pod;
  std::vector<BmdFactors> bmd;
  int r_offset = 10;
};

inline FitContext make_fit_context(const std::vector<TrajectorySet>& runs,
                                   const std::vector<GramianPair>* grams,
                                   const std::vector<Algorithm>& algs,
                                   bool algebraic, int jobs = 1) {
  FitContext c;
  c.algebraic = algebraic;
  c.dt = runs.front().dt;
  for (const auto& r : runs) c.snaps.push_back(build_snapshots(r));
  const int ng = static_cast<int>(c.snaps.size());
  auto wants = [&](Algorithm a) {
    return std::find(algs.begin(), algs.end(), a) != algs.end();
  };
  if (wants(Algorithm::dmdc)) {
    c.dmdc_prep.resize(ng);
    parallel_for(ng, jobs, [&](int j) { c.dmdc_prep[j] = prepare_dmdc(c.snaps[j], false); });
  }
  if (wants(Algorithm::admdc)) {
    c.admdc_prep.resize(ng);
    parallel_for(ng, jobs, [&](int j) { c.admdc_prep[j] = prepare_dmdc(c.snaps[j], true); });
  }
  if (wants(Algorithm::iorom)) c.pod = shared_pod_modes(c.snaps);
  if (wants(Algorithm::bmd)) {
    if (!grams) throw MissingPrerequisite("BMD needs Gramians");
    if (grams->size() != c.snaps.size())
      throw DimensionError("one Gramian pair per grid point expected");
    c.bmd = prepare_bmd_factors(*grams, jobs);
  }
  return c;
}

inline GridROM fit_grid_rom(const FitContext& c, Algorithm alg, int n_z,
                            int jobs = 1) {
  const int ng = static_cast<int>(c.snaps.size());
  std::vector<ReducedModel> models(ng);
  switch (alg) {
    case Algorithm::dmdc:
    case Algorithm::admdc: {
      const auto& prep = alg == Algorithm::dmdc ? c.dmdc_prep : c.admdc_prep;
      if (prep.empty()) throw MissingPrerequisite(to_string(alg) + " was not prepared");
      parallel_for(ng, jobs, [&](int j) {
        models[j] = dmdc_fit(prep[j], c.snaps[j], n_z + c.r_offset, n_z);
      });
      break;
    }
    case Algorithm::iorom: {
      if (!c.pod) throw MissingPrerequisite("iorom was not prepared");
      const Matrix Q = pod_basis(*c.pod, n_z);
      parallel_for(ng, jobs, [&](int j) {
        models[j] = iorom_fit(c.snaps[j], Q, c.algebraic);
      });
      break;
    }
    case Algorithm::bmd: {
      if (c.bmd.empty()) throw MissingPrerequisite("bmd was not prepared");
      const ObliqueProjector p = bmd_spaces(c.bmd, n_z, jobs);
      parallel_for(ng, jobs, [&](int j) {
        models[j] = bmd_fit(c.snaps[j], p.V, p.W[j], c.algebraic);
      });
      break;
    }
    case Algorithm::exact:
      throw ConfigError("the exact model is built from the plant, not fitted");
  }
  return make_grid_rom(alg, models, c.snaps, c.dt);
}

// Reduced state consistent with a full state at rho: projections at the
// bracketing knots, interpolated.
inline Vector project_state(const GridROM& g, double rho, const Vector& x) {
  if (g.xbar.empty()) throw ConfigError("projection needs full-state trims");
  const auto loc = locate(g.grid_rhos, rho);
  auto proj = [&](size_t j) -> Vector {
    return g.models[j].test.transpose() * (x - g.xbar[j]);
  };
  if (g.size() == 1 || loc.weight == 0.0) return proj(loc.index);
  if (loc.weight == 1.0) return proj(loc.index + 1);
  return (1.0 - loc.weight) * proj(loc.index) + loc.weight * proj(loc.index + 1);
}

// Absolute outputs predicted for absolute inputs `u` from full state x0.
inline Matrix predict_outputs(const GridROM& g, const Matrix& u,
                              const Vector& rho, const Vector& x0,
                              const Matrix& readout) {
  if (g.algorithm == Algorithm::admdc || g.algorithm == Algorithm::dmdc) {
    ParallelPredictor pred(g.models, g.grid_rhos, g.xbar, g.ubar);
    return admdc_lpv_predict(pred, u, rho, x0, readout).outputs;
  }
  return simulate_lpv(g, u, rho, project_state(g, rho(0), x0)).Y;
}

struct EvalScenario {
  std::string name;
  SignalSpec signal;
  double speed_from = 20.0;
  double speed_to = 50.0;
  int n_s = 500;
};

inline std::vector<EvalScenario> default_eval_scenarios() {
  EvalScenario sine{"sine", sine_bank_spec()};
  EvalScenario chirp{"chirp", SignalSpec{}};
  chirp.signal.kind = SignalKind::chirp;
  EvalScenario prbs{"prbs", SignalSpec{}};
  prbs.signal.kind = SignalKind::prbs9;
  return {sine, chirp, prbs};
}

// Ground truth for one scenario: the plant driven about its interpolated
// trims along the speed ramp.
struct EvalCase {
  std::string name;
  Matrix u;      // absolute inputs
  Vector rho;
  Vector x0;
  Matrix y;      // plant outputs
  Matrix ybar;   // interpolated output trims
};

inline EvalCase make_eval_case(const HighOrderPlant& plant,
                               const PlantTrimTable& trims,
                               const EvalScenario& sc, std::uint64_t seed) {
  SignalSpec s = sc.signal;
  s.n_u = static_cast<int>(plant.n_u());
  s.n_s = sc.n_s;
  s.dt = plant.dt;
  s.seed = seed;
  EvalCase c;
  c.name = sc.name;
  c.rho = linear_profile(sc.speed_from, sc.speed_to, sc.n_s + 1);
  const Matrix du = generate(s, c.rho);
  const Eigen::Index n = du.cols();
  c.u.resize(du.rows(), n);
  c.ybar.resize(plant.n_y(), n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Trim t = trims.at(c.rho(k));
    c.u.col(k) = du.col(k) + t.u;
    c.ybar.col(k) = t.y;
  }
  c.x0 = trims.at(c.rho(0)).x;
  c.y = simulate(plant, c.u, c.rho, c.x0).outputs;
  return c;
}

// ||y_pred - y|| / ||y - ybar|| on the selected output row.
inline double prediction_error(const Matrix& y_pred, const EvalCase& c, int output) {
  if (output < 0 || output >= c.y.rows()) throw ConfigError("output index out of range");
  return relative_error(y_pred.row(output) - c.ybar.row(output),
                        c.y.row(output) - c.ybar.row(output));
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw DimensionError("median of nothing");
  std::sort(v.begin(), v.end());
  const size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// Controller for a fitted or exact GridROM.
inline std::unique_ptr<RomController> make_controller(const GridROM& g,
                                                      const Matrix& readout) {
  if (g.algorithm == Algorithm::admdc || g.algorithm == Algorithm::dmdc)
    return std::make_unique<AdmdcController>(g, readout);
  return std::make_unique<GridRomController>(g);
}

}  // namespace bmdrom
