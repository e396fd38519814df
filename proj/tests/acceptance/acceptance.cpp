// Acceptance checks: one PASS/FAIL line per criterion.
//   acceptance                 run all criteria
//   acceptance --criterion N   run criterion N only (exit 0 on PASS)

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <optional>
#include <random>

#include <CLI11.hpp>

#include "bmdrom/bmdrom.hpp"
#include "bmdrom/pipeline.hpp"

using namespace bmdrom;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

Matrix randn(Eigen::Index r, Eigen::Index c, std::mt19937& g) {
  std::normal_distribution<double> n;
  Matrix M(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) M(i, j) = n(g);
  return M;
}

// Markov parameters 1..count (feedthrough excluded), stacked.
Matrix markov_tail(const Matrix& F, const Matrix& G, const Matrix& H, int count) {
  Matrix out(count * H.rows(), G.cols());
  Matrix X = G;
  for (int k = 0; k < count; ++k) {
    out.middleRows(k * H.rows(), H.rows()) = H * X;
    X = F * X;
  }
  return out;
}

PlantConfig benchmark_config() {
  PlantConfig c;
  c.grid_rhos = grid_range(20.0, 50.0, 2.0);
  return c;
}

// Shared benchmark data, built on first use.
struct Bench {
  HighOrderPlant plant;
  std::vector<double> grid;
  std::vector<Trim> trims;
  PlantTrimTable table;
  std::optional<std::vector<GramianPair>> grams;

  const std::vector<GramianPair>& gramians() {
    if (!grams)
      grams = grid_gramians(plant, grid, default_horizon(max_pole_radius(plant)),
                            ObservabilityMethod::adjoint_impulse);
    return *grams;
  }
  FitContext context(std::uint64_t seed) {
    const auto runs = training_runs(plant, grid, trims, training_spec(), seed);
    return make_fit_context(runs, &gramians(),
                            {Algorithm::admdc, Algorithm::iorom, Algorithm::bmd}, true);
  }
  static SignalSpec training_spec() {
    SignalSpec s;
    s.kind = SignalKind::impulse_train;
    return s;
  }
};

Bench& bench() {
  static std::optional<Bench> b;
  if (!b) {
    b.emplace();
    b->plant = make_benchmark_plant(benchmark_config());
    b->grid = b->plant.grid_rhos;
    TrimOptions o;
    o.tol = 1e-12;
    b->trims = grid_trims(b->plant, b->grid, 50000, o);
    b->table = PlantTrimTable{b->grid, b->trims};
  }
  return *b;
}

// 1. BMD with exact Gramians at one point reproduces balanced truncation.
Outcome criterion1() {
  const auto t0 = Clock::now();
  PlantConfig pc = benchmark_config();
  pc.algebraic = false;
  const HighOrderPlant p = make_benchmark_plant(pc);
  const StateSpace& s = p.systems[0];
  GramianPair g;
  g.Wc = dlyap(s.A, s.B * s.B.transpose());
  g.Wo = dlyap(s.A.transpose(), s.C.transpose() * s.C);
  const auto fac = prepare_bmd_factors(std::vector<GramianPair>{g});
  double worst = 0.0;
  for (int nz : {2, 6, 10}) {
    const ObliqueProjector op = bmd_spaces(fac, nz);
    const Matrix& V = op.V;
    const Matrix& W = op.W[0];
    const Matrix M1 =
        markov_tail(W.transpose() * s.A * V, W.transpose() * s.B, s.C * V, 50);
    const auto bt = balanced_truncation_oracle(s, nz);
    const Matrix M2 = markov_tail(bt.model.F, bt.model.G, bt.model.H, 50);
    worst = std::max(worst, (M1 - M2).norm() / M2.norm());
  }
  const double sec = seconds_since(t0);
  return {worst <= 1e-8 && sec < 30.0,
          "max Markov rel. diff " + num(worst) + ", " + num(sec) + " s"};
}

// 2. Every projector on the 16-point grid is biorthogonal and idempotent.
Outcome criterion2() {
  Bench& b = bench();
  const auto fac = prepare_bmd_factors(b.gramians());
  double worst_bi = 0.0, worst_idem = 0.0;
  int count = 0;
  for (int nz = 10; nz <= 40; nz += 2) {
    const ObliqueProjector op = bmd_spaces(fac, nz);
    for (size_t j = 0; j < op.W.size(); ++j) {
      const Matrix I = Matrix::Identity(nz, nz);
      worst_bi = std::max(worst_bi, (op.W[j].transpose() * op.V - I).norm());
      const Matrix P = op.projector(j);
      worst_idem = std::max(worst_idem, (P * P - P).norm() / P.norm());
      ++count;
    }
  }
  return {b.grid.size() == 16 && worst_bi <= 1e-8 && worst_idem <= 1e-8,
          std::to_string(count) + " projectors, max |W'V-I| " + num(worst_bi) +
              ", max |PP-P|/|P| " + num(worst_idem)};
}

// 3. Noiseless data from an order-6 LTI plant: all fitters are exact.
Outcome criterion3() {
  std::mt19937 g(3);
  const int nx = 20, nr = 6, nu = 2, ny = 2, ns = 300, steps = 200;
  Matrix A11 = randn(nr, nr, g), A22 = randn(nx - nr, nx - nr, g);
  A11 *= 0.9 / spectral_radius(A11);
  A22 *= 0.8 / spectral_radius(A22);
  const Matrix T = Eigen::HouseholderQR<Matrix>(randn(nx, nx, g)).householderQ();
  Matrix Ab = Matrix::Zero(nx, nx), Bb = Matrix::Zero(nx, nu);
  Ab.topLeftCorner(nr, nr) = A11;
  Ab.bottomRightCorner(nx - nr, nx - nr) = A22;
  Bb.topRows(nr) = randn(nr, nu, g);
  const Matrix A = T * Ab * T.transpose(), B = T * Bb;
  const Matrix C = randn(ny, nx, g), D = randn(ny, nu, g);

  SnapshotSet snap;
  const Matrix u = randn(nu, ns + 1, g);
  snap.X0.resize(nx, ns);
  snap.X1.resize(nx, ns);
  snap.Y0.resize(ny, ns);
  snap.U0 = u.leftCols(ns);
  snap.U1 = u.rightCols(ns);
  Vector x = Vector::Zero(nx);
  for (int k = 0; k < ns; ++k) {
    snap.X0.col(k) = x;
    snap.Y0.col(k) = C * x + D * u.col(k);
    x = A * x + B * u.col(k);
    snap.X1.col(k) = x;
  }
  snap.trim = Trim{Vector::Zero(nx), Vector::Zero(nu), Vector::Zero(ny)};

  // impulse responses: column block i is the response to input i at k = 0
  auto full_state = [&]() {
    Matrix R(nx * steps, nu);
    Matrix X = B;
    for (int k = 0; k < steps; ++k, X = A * X) R.middleRows(k * nx, nx) = X;
    return R;
  };
  auto full_output = [&]() {
    Matrix R(ny * steps, nu);
    R.topRows(ny) = D;
    Matrix X = B;
    for (int k = 1; k < steps; ++k, X = A * X) R.middleRows(k * ny, ny) = C * X;
    return R;
  };
  auto reduced_state = [&](const ReducedModel& m) {
    Matrix R(nx * steps, nu);
    Matrix Z = m.G;  // the L term multiplies u_1 = 0
    for (int k = 0; k < steps; ++k, Z = m.F * Z) R.middleRows(k * nx, nx) = m.lift * Z;
    return R;
  };
  auto reduced_output = [&](const ReducedModel& m) {
    Matrix R(ny * steps, nu);
    R.topRows(ny) = m.D;
    Matrix Z = m.G;
    for (int k = 1; k < steps; ++k, Z = m.F * Z) R.middleRows(k * ny, ny) = m.H * Z;
    return R;
  };
  auto rel = [](const Matrix& a, const Matrix& b) { return (a - b).norm() / b.norm(); };

  const Matrix xs = full_state(), ys = full_output();
  const double e_dmdc = rel(reduced_state(dmdc_fit(snap, nr + nu, nr)), xs);
  const double e_admdc = rel(reduced_state(admdc_fit(snap, nr + 2 * nu, nr)), xs);
  const double e_iorom =
      rel(reduced_output(iorom_fit(snap, build_shared_pod_basis({snap}, nr))), ys);
  GramianPair gp;
  gp.Wc = dlyap(A, B * B.transpose());
  gp.Wo = dlyap(A.transpose(), C.transpose() * C);
  const ObliqueProjector op = bmd_spaces(std::vector<GramianPair>{gp}, nr);
  const double e_bmd = rel(reduced_output(bmd_fit(snap, op.V, op.W[0])), ys);
  const double worst = std::max({e_dmdc, e_admdc, e_iorom, e_bmd});
  return {worst <= 1e-6, "dmdc " + num(e_dmdc) + ", admdc " + num(e_admdc) + ", iorom " +
                             num(e_iorom) + ", bmd " + num(e_bmd)};
}

// 4. Gramian tail decay under horizon doubling; observability routes agree.
Outcome criterion4() {
  const HighOrderPlant& p = bench().plant;
  const StateSpace s = p.systems[0];
  const double r = spectral_radius(s.A);
  const int T = default_horizon(r, 1e-2);
  const Matrix W1 = empirical_controllability(s, T);
  const Matrix W2 = empirical_controllability(s, 2 * T);
  const Matrix W4 = empirical_controllability(s, 4 * T);
  const double d1 = (W2 - W1).norm() / W1.norm();
  const double d2 = (W4 - W2).norm() / W2.norm();
  const double bound = d1 * std::pow(r, 2 * T) / 0.5;
  const Matrix Oa = empirical_observability(s, T, ObservabilityMethod::adjoint_impulse);
  const Matrix Op = empirical_observability(s, T, ObservabilityMethod::perturbation);
  const double route = (Oa - Op).norm() / Op.norm();
  return {d2 <= bound && route <= 1e-10,
          "T " + std::to_string(T) + ", d(T) " + num(d1) + ", d(2T) " + num(d2) +
              " <= " + num(bound) + ", routes " + num(route)};
}

// 5. Balanced truncation impulse error stays inside twice the Hankel tail.
Outcome criterion5() {
  PlantConfig pc = benchmark_config();
  pc.algebraic = false;
  const HighOrderPlant p = make_benchmark_plant(pc);
  const StateSpace& s = p.systems[0];
  const int steps = default_horizon(spectral_radius(s.A), 1e-8);
  const Matrix full = markov_tail(s.A, s.B, s.C, steps);
  double worst_ratio = 0.0;
  for (int nz : {2, 6, 10, 20, 40}) {
    const auto bt = balanced_truncation_oracle(s, nz);
    const Matrix red = markov_tail(bt.model.F, bt.model.G, bt.model.H, steps);
    const double tail = bt.hankel.tail(bt.hankel.size() - nz).sum();
    for (Eigen::Index i = 0; i < s.B.cols(); ++i) {
      const double err = (full.col(i) - red.col(i)).norm();
      worst_ratio = std::max(worst_ratio, err / (2.0 * tail));
    }
  }
  return {worst_ratio <= 1.0, "max error / (2 * Hankel tail) " + num(worst_ratio)};
}

// 6. LPV simulation at frozen knots matches the frozen models exactly.
Outcome criterion6() {
  Bench& b = bench();
  const FitContext ctx = b.context(1);
  std::mt19937 g(6);
  double worst_y = 0.0, worst_z = 0.0;
  for (Algorithm a : {Algorithm::iorom, Algorithm::bmd}) {
    const GridROM r = fit_grid_rom(ctx, a, 10);
    for (size_t j = 0; j < r.size(); ++j) {
      const ReducedModel& m = r.models[j];
      const int n = 200;
      const Matrix du = 0.5 * randn(m.n_u(), n, g);
      const Matrix u = du.colwise() + r.ubar[j];
      const Vector z0 = randn(m.n_z(), 1, g);
      const LpvSimulation s = simulate_lpv(r, u, Vector::Constant(n, r.grid_rhos[j]), z0);
      Vector z = z0;
      for (int k = 0; k < n; ++k) {
        const int kn = std::min(k + 1, n - 1);
        const Vector y = m.H * z + m.D * du.col(k) + m.P * du.col(kn) + r.ybar[j];
        worst_y = std::max(worst_y, (s.Y.col(k) - y).cwiseAbs().maxCoeff());
        worst_z = std::max(worst_z, (s.Z.col(k) - z).cwiseAbs().maxCoeff());
        z = m.F * z + m.G * du.col(k) + m.L * du.col(kn);
      }
    }
  }
  return {worst_y <= 1e-12 && worst_z <= 1e-12,
          "max output diff " + num(worst_y) + ", max state diff " + num(worst_z)};
}

// 7. Ramp-scenario errors: BMD lowest at low order, all close by n_z = 40.
Outcome criterion7() {
  const auto t0 = Clock::now();
  Bench& b = bench();
  const std::vector<Algorithm> algs = {Algorithm::admdc, Algorithm::iorom, Algorithm::bmd};
  const auto scenarios = default_eval_scenarios();
  std::vector<int> orders;
  for (int n = 10; n <= 40; n += 2) orders.push_back(n);
  const Matrix readout = b.plant.systems[0].C;
  // err[s][a][o] over seeds
  std::vector<std::vector<std::vector<std::vector<double>>>> err(
      scenarios.size(), std::vector<std::vector<std::vector<double>>>(
                            algs.size(), std::vector<std::vector<double>>(orders.size())));
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const FitContext ctx = b.context(seed);
    std::vector<EvalCase> cases;
    for (size_t s = 0; s < scenarios.size(); ++s)
      cases.push_back(make_eval_case(b.plant, b.table, scenarios[s], derive_seed(seed, 1000 + s)));
    for (size_t a = 0; a < algs.size(); ++a)
      for (size_t o = 0; o < orders.size(); ++o) {
        const GridROM r = fit_grid_rom(ctx, algs[a], orders[o]);
        for (size_t s = 0; s < cases.size(); ++s) {
          const Matrix y = predict_outputs(r, cases[s].u, cases[s].rho, cases[s].x0, readout);
          err[s][a][o].push_back(prediction_error(y, cases[s], 0));
        }
      }
  }
  bool low_ok = true, conv_ok = true;
  std::string detail;
  for (size_t s = 0; s < scenarios.size(); ++s) {
    std::vector<std::vector<double>> med(algs.size(), std::vector<double>(orders.size()));
    for (size_t a = 0; a < algs.size(); ++a)
      for (size_t o = 0; o < orders.size(); ++o) med[a][o] = median(err[s][a][o]);
    std::printf("  %s medians (n_z: admdc iorom bmd)\n", scenarios[s].name.c_str());
    for (size_t o = 0; o < orders.size(); ++o)
      std::printf("    %2d: %.4g %.4g %.4g\n", orders[o], med[0][o], med[1][o], med[2][o]);
    for (size_t o = 0; o < 3; ++o)
      low_ok = low_ok && med[2][o] < med[0][o] && med[2][o] < med[1][o];
    const size_t last = orders.size() - 1;
    const double hi = std::max({med[0][last], med[1][last], med[2][last]});
    const double lo = std::min({med[0][last], med[1][last], med[2][last]});
    conv_ok = conv_ok && hi <= 2.0 * lo;
    detail += scenarios[s].name + " spread@40 " + num(hi / lo) + "; ";
  }
  const double sec = seconds_since(t0);
  detail += std::string("bmd lowest at 10-14: ") + (low_ok ? "yes" : "no") +
            ", within 2x at 40: " + (conv_ok ? "yes" : "no") + ", " + num(sec) + " s";
  return {low_ok && conv_ok && sec < 600.0, detail};
}

// 8. Closed-loop MPC: exact floor, BMD ahead at n_z = 10, zero cost at trim.
Outcome criterion8() {
  Bench& b = bench();
  const FitContext ctx = b.context(1);
  const MpcConfig cfg = paper_bending_config();
  MpcScenarioSpec sp;
  sp.seed = derive_seed(1, 2000);
  const ClosedLoopScenario sc = make_mpc_scenario(b.plant, sp, cfg);
  const Matrix readout = b.plant.systems[0].C;

  std::vector<std::pair<std::string, GridROM>> roms = {
      {"exact", exact_grid_rom(b.plant, b.trims)}};
  for (Algorithm a : {Algorithm::admdc, Algorithm::iorom, Algorithm::bmd})
    roms.emplace_back(to_string(a), fit_grid_rom(ctx, a, 10));

  ClosedLoopScenario trim_sc;
  trim_sc.rho = Vector::Constant(200, 30.0);
  trim_sc.reference = Matrix::Zero(1, 200);
  trim_sc.disturbance = Matrix::Zero(b.plant.n_u(), 200);

  std::map<std::string, double> J;
  double worst_trim = 0.0, worst_cond = 0.0;
  std::string detail;
  for (const auto& [name, g] : roms) {
    auto ctrl = make_controller(g, readout);
    const ClosedLoopResult r = closed_loop_run(b.plant, b.table, *ctrl, sc, cfg);
    J[name] = r.J;
    worst_cond = std::max(worst_cond, r.max_condensation_error);
    auto ctrl0 = make_controller(g, readout);
    const ClosedLoopResult r0 = closed_loop_run(b.plant, b.table, *ctrl0, trim_sc, cfg);
    worst_trim = std::max(worst_trim, r0.J);
    worst_cond = std::max(worst_cond, r0.max_condensation_error);
    detail += name + " " + num(r.J) + ", ";
  }
  const bool floor = J["exact"] <= J["admdc"] && J["exact"] <= J["iorom"] &&
                     J["exact"] <= J["bmd"];
  const bool trend = J["bmd"] <= J["iorom"] && J["bmd"] <= J["admdc"];
  detail += "trim J " + num(worst_trim) + ", condensation " + num(worst_cond);
  return {floor && trend && worst_trim <= 1e-10 && worst_cond <= 1e-10, detail};
}

// 9. Two full CLI runs with one config give byte-identical files.
Outcome criterion9() {
  const fs::path base = fs::temp_directory_path() / "bmdrom_acceptance_c9";
  fs::remove_all(base);
  const std::string cfg = std::string(BMDROM_SOURCE_DIR) + "/configs/small.json";
  for (int run : {1, 2}) {
    const std::string cmd = std::string("\"") + BMDROM_CLI + "\" --quiet --jobs " +
                            std::to_string(run) + " --config \"" + cfg + "\" --out \"" +
                            (base / ("run" + std::to_string(run))).string() + "\" all";
    if (std::system(cmd.c_str()) != 0) return {false, "pipeline run " + std::to_string(run) + " failed"};
  }
  int csv = 0, files = 0;
  std::vector<std::string> diffs;
  const fs::path r1 = base / "run1", r2 = base / "run2";
  for (const auto& e : fs::recursive_directory_iterator(r1)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), r1);
    ++files;
    if (rel.extension() == ".csv") ++csv;
    if (!fs::exists(r2 / rel) || read_file(e.path()) != read_file(r2 / rel))
      diffs.push_back(rel.string());
  }
  for (const auto& e : fs::recursive_directory_iterator(r2))
    if (e.is_regular_file() && !fs::exists(r1 / fs::relative(e.path(), r2)))
      diffs.push_back(fs::relative(e.path(), r2).string());
  std::string detail = std::to_string(files) + " files (" + std::to_string(csv) +
                       " CSV) compared, " + std::to_string(diffs.size()) + " differ";
  if (!diffs.empty()) detail += ", first " + diffs.front();
  return {diffs.empty() && csv > 0, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  int only = 0;
  app.add_option("--criterion", only, "run one criterion (1-9)")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::function<Outcome()>> checks = {
      criterion1, criterion2, criterion3, criterion4, criterion5,
      criterion6, criterion7, criterion8, criterion9};
  bool all = true;
  for (int i = 1; i <= 9; ++i) {
    if (only && i != only) continue;
    Outcome o;
    try {
      o = checks[i - 1]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d: %s  %s\n", i, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
