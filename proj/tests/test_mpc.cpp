#include <catch_amalgamated.hpp>

#include <limits>
#include <random>

#include "bmdrom/mpc.hpp"
#include "bmdrom/study.hpp"

using namespace bmdrom;

namespace {

Matrix randn(int r, int c, std::mt19937& g) {
  std::normal_distribution<double> n;
  Matrix M(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) M(i, j) = n(g);
  return M;
}

// Enumerates every lower/free/upper assignment; returns the KKT point.
Vector brute_force_box_qp(const Matrix& H, const Vector& f, const Vector& lb,
                          const Vector& ub) {
  const int n = static_cast<int>(f.size());
  int combos = 1;
  for (int i = 0; i < n; ++i) combos *= 3;
  double best = std::numeric_limits<double>::infinity();
  Vector arg;
  for (int c = 0; c < combos; ++c) {
    std::vector<int> st(n);
    for (int i = 0, v = c; i < n; ++i, v /= 3) st[i] = v % 3;
    Vector x = Vector::Zero(n);
    std::vector<int> fr;
    for (int i = 0; i < n; ++i) {
      if (st[i] == 0) x(i) = lb(i);
      else if (st[i] == 2) x(i) = ub(i);
      else fr.push_back(i);
    }
    if (!fr.empty()) {
      const int m = static_cast<int>(fr.size());
      Matrix Hf(m, m);
      Vector r(m);
      for (int a = 0; a < m; ++a) {
        r(a) = -f(fr[a]);
        for (int b = 0; b < n; ++b)
          if (st[b] != 1) r(a) -= H(fr[a], b) * x(b);
        for (int b = 0; b < m; ++b) Hf(a, b) = H(fr[a], fr[b]);
      }
      const Vector xf = Hf.ldlt().solve(r);
      for (int a = 0; a < m; ++a) x(fr[a]) = xf(a);
    }
    if ((x - x.cwiseMax(lb).cwiseMin(ub)).norm() > 1e-12) continue;
    const double J = 0.5 * x.dot(H * x) + f.dot(x);
    if (J < best) {
      best = J;
      arg = x;
    }
  }
  return arg;
}

HighOrderPlant small_plant() {
  PlantConfig c;
  c.n_x = 16;
  c.n_u = 6;
  c.groups = {{3, 0.05, 0.1, 1.0}, {5, 0.3, 0.7, 1.0}};
  c.grid_rhos = grid_range(20.0, 50.0, 10.0);
  return make_benchmark_plant(c);
}

MpcConfig small_config() {
  MpcConfig c = paper_bending_config();
  c.horizon = 6;
  return c;
}

}  // namespace

TEST_CASE("paper weights") {
  const MpcConfig b = paper_bending_config();
  CHECK(b.N(0, 0) == 13000.0);
  CHECK(b.M(0, 0) == 10.0);
  CHECK(b.M_delta(0, 0) == 0.1);
  CHECK(b.u_min(0) == -3.0);
  CHECK(b.u_max(0) == 3.0);
  CHECK(b.horizon == 10);
  CHECK(paper_lift_config().N(0, 0) == 1300.0);
}

TEST_CASE("MPC config validation") {
  MpcConfig c = paper_bending_config();
  c.N(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = paper_bending_config();
  c.M(0, 0) = -1.0;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = paper_bending_config();
  c.u_min(0) = 4.0;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = paper_bending_config();
  c.controlled = {1, 2};
  CHECK_THROWS_AS(validate(c), ConfigError);
}

TEST_CASE("box QP matches exhaustive active-set enumeration") {
  std::mt19937 g(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix A = randn(5, 5, g);
    const Matrix H = A * A.transpose() + 0.1 * Matrix::Identity(5, 5);
    const Vector f = 3.0 * randn(5, 1, g);
    const Vector lb = Vector::Constant(5, -0.5), ub = Vector::Constant(5, 0.7);
    const QpResult r = solve_box_qp(H, f, lb, ub);
    const Vector ref = brute_force_box_qp(H, f, lb, ub);
    CHECK((r.x - ref).norm() < 1e-6);
    CHECK(r.kkt_residual <= 1e-8 * (1.0 + f.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("box QP: interior optimum and iteration cap") {
  Matrix H(2, 2);
  H << 2, 0.5, 0.5, 1;
  Vector f(2);
  f << -1, 0.3;
  const Vector big = Vector::Constant(2, 100.0);
  const QpResult r = solve_box_qp(H, f, -big, big);
  CHECK((r.x - H.ldlt().solve(-f)).norm() < 1e-12);
  CHECK(r.iterations == 0);

  // optimum (0.5, -0.45) is not the clipped unconstrained point
  Matrix H2(2, 2);
  H2 << 1, 0.9, 0.9, 1;
  Vector f2(2);
  f2 << -1, 0;
  const Vector b = Vector::Constant(2, 0.5);
  const QpResult ok = solve_box_qp(H2, f2, -b, b);
  CHECK(std::abs(ok.x(0) - 0.5) < 1e-9);
  CHECK(std::abs(ok.x(1) + 0.45) < 1e-9);
  try {
    solve_box_qp(H2, f2, -b, b, 1);
    FAIL("expected ConvergenceError");
  } catch (const ConvergenceError& e) {
    CHECK(e.kkt_residual() > 0.0);
  }
}

TEST_CASE("condensed cost equals direct horizon simulation") {
  std::mt19937 g(3);
  const MpcConfig cfg = small_config();
  HorizonModel m;
  for (int part = 0; part < 2; ++part) {
    PredictorComponent p{0.3 * randn(4, 4, g), randn(4, 6, g), randn(4, 6, g),
                         randn(2, 4, g),       randn(2, 6, g), randn(2, 6, g),
                         randn(6, 1, g),       randn(2, 1, g), randn(4, 1, g)};
    m.parts.push_back(p);
  }
  m.ybar = randn(2, 1, g);
  m.ubar = randn(6, 1, g);
  m.u_prev = randn(6, 1, g);
  m.base = randn(6, 1, g);
  m.base(4) = m.ubar(4);
  const Vector up = randn(1, 1, g);
  const Matrix ref = randn(1, cfg.horizon, g);
  const CondensedQp q = condense(m, up, ref, cfg);
  for (int t = 0; t < 5; ++t) {
    const Vector U = randn(cfg.horizon, 1, g);
    const double Jc = 0.5 * U.dot(q.H * U) + q.f.dot(U) + q.c;
    const double Jd = direct_horizon_cost(m, U, up, ref, cfg);
    CHECK(std::abs(Jc - Jd) <= 1e-10 * std::max(1.0, std::abs(Jd)));
  }
  const HorizonSolution s = solve_horizon(m, up, ref, cfg);
  CHECK(s.condensation_error <= 1e-10);
}

TEST_CASE("exact-model prediction reproduces the plant over the horizon") {
  const HighOrderPlant p = small_plant();
  TrimOptions o;
  o.tol = 1e-12;
  const auto trims = grid_trims(p, p.grid_rhos, 100000, o);
  const GridROM ex = exact_grid_rom(p, trims);
  GridRomController ctrl(ex);
  const double rho = 30.0;
  const Trim t = trims[1];
  std::mt19937 g(4);
  const MpcConfig cfg = small_config();
  Vector x_prev = t.x + 0.1 * randn(16, 1, g);
  const Vector u_prev = t.u + 0.1 * randn(6, 1, g);
  HorizonModel m = ctrl.model(rho, x_prev, u_prev);
  m.base = t.u;
  const Vector U = randn(cfg.horizon, 1, g);
  const Matrix ref = Matrix::Zero(1, cfg.horizon);
  const CondensedQp q = condense(m, Vector::Zero(1), ref, cfg);
  const Vector y_pred = q.y0 + q.Gamma * U;
  const StateSpace s = p.at(rho);
  Vector x = x_prev, u_last = u_prev;
  for (int i = 0; i < cfg.horizon; ++i) {
    Vector u = t.u;
    u(4) += U(i);
    Vector u_next = t.u;
    u_next(4) += U(std::min(i + 1, cfg.horizon - 1));
    x = s.step(x, u_last, u);
    const Vector y = s.output(x, u, u_next) - t.y;
    CHECK(std::abs(y(0) - y_pred(i)) < 1e-10);
    u_last = u;
  }
}

TEST_CASE("closed loop at trim with zero reference costs nothing") {
  const HighOrderPlant p = small_plant();
  TrimOptions o;
  o.tol = 1e-12;
  const auto trims = grid_trims(p, p.grid_rhos, 100000, o);
  const PlantTrimTable table{p.grid_rhos, trims};
  GridRomController ctrl(exact_grid_rom(p, trims));
  ClosedLoopScenario sc;
  sc.rho = Vector::Constant(60, 40.0);
  sc.reference = Matrix::Zero(1, 60);
  sc.disturbance = Matrix::Zero(6, 60);
  const ClosedLoopResult r = closed_loop_run(p, table, ctrl, sc, small_config());
  CHECK(r.J <= 1e-10);
  CHECK(r.max_condensation_error <= 1e-10);
}

TEST_CASE("closed-loop cost accounting and input bounds") {
  const HighOrderPlant p = small_plant();
  TrimOptions o;
  o.tol = 1e-12;
  const auto trims = grid_trims(p, p.grid_rhos, 100000, o);
  const PlantTrimTable table{p.grid_rhos, trims};
  GridRomController ctrl(exact_grid_rom(p, trims));
  const MpcConfig cfg = small_config();
  const int n = 80;
  ClosedLoopScenario sc;
  sc.rho = Vector::Constant(n, 30.0);
  sc.reference = Matrix::Constant(1, n, 0.02);
  sc.disturbance = Matrix::Zero(6, n);
  const ClosedLoopResult r = closed_loop_run(p, table, ctrl, sc, cfg);
  // replay the applied inputs on the plant and total the stage costs
  const StateSpace s = p.at(30.0);
  const Trim& t = trims[1];
  Vector x = t.x, u_prev = t.u;
  double J = 0.0, du_prev = 0.0;
  for (int k = 0; k < n; ++k) {
    const Vector u = r.u.col(k);
    x = s.A * x + s.B * u_prev + s.R * u;
    const double e = (s.C * x + s.D * u - t.y)(0) - 0.02;
    const double du = u(4) - t.u(4);
    CHECK(std::abs(du) <= 3.0 + 1e-12);
    CHECK(std::abs(r.y(0, k) - (e + 0.02)) < 1e-10);
    J += 13000.0 * e * e + 10.0 * du * du + 0.1 * (du - du_prev) * (du - du_prev);
    du_prev = du;
    u_prev = u;
    for (int c : {0, 1, 2, 3, 5}) CHECK(u(c) == t.u(c));
  }
  CHECK(std::abs(r.J - J) <= 1e-9 * J);
  CHECK(r.max_condensation_error <= 1e-10);
}

TEST_CASE("scenario builder: ramp, gust, reference") {
  const HighOrderPlant p = small_plant();
  const MpcConfig cfg = paper_bending_config();
  MpcScenarioSpec sp;
  sp.turbulence_sigma = 0.0;
  const ClosedLoopScenario sc = make_mpc_scenario(p, sp, cfg);
  CHECK(sc.rho(0) == 27.0);
  CHECK(sc.rho(400) == 50.0);
  CHECK(sc.rho(599) == 50.0);
  CHECK(sc.disturbance.row(0).maxCoeff() == Catch::Approx(1.0).epsilon(1e-3));
  CHECK(sc.disturbance.row(0).head(410).norm() == 0.0);
  CHECK(sc.disturbance.bottomRows(5).norm() == 0.0);
  CHECK(sc.reference.cols() == 600);
  CHECK(sc.reference.row(0).head(50).norm() == 0.0);
  CHECK(smoothstep01(-1.0) == 0.0);
  CHECK(smoothstep01(2.0) == 1.0);
}
