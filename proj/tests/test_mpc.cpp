#include <gtest/gtest.h>

#include <cmath>

#include "example_design.hpp"
#include "iqcmpc/mpc.hpp"
#include "iqcmpc/tube.hpp"

using namespace iqcmpc;

namespace {

constexpr double kTol = 1e-9;

// Plan that applies the terminal gain from z0 with tube sizes from s0.
MPCSolution terminal_plan(const Vector& z0, double s0, const MPCConfig& cfg) {
  std::vector<Vector> v;
  Vector z = z0;
  for (int k = 0; k < cfg.horizon; ++k) {
    v.push_back(cfg.terminal.k_omega * z);
    z = cfg.sys.a * z + cfg.sys.b_u * v.back();
  }
  return simulate_nominal(z0, v, s0, cfg);
}

OcpContext first_context(const Vector& x) {
  OcpContext ctx;
  ctx.x = x;
  return ctx;
}

double stage_cost(const MPCSolution& sol, const MPCConfig& cfg) {
  return cfg.q.quad(sol.z_bar.front()) + cfg.r.quad(sol.v_bar.front());
}

// Point of the terminal set in direction (cos a, sin a) at a fraction of its boundary.
Vector inside_terminal(double angle, double fraction, const MPCConfig& cfg) {
  const Vector dir{{std::cos(angle), std::sin(angle)}};
  return dir * std::sqrt(fraction * cfg.terminal.x_omega / cfg.terminal.s_mat.quad(dir));
}

}  // namespace

TEST(Mpc, ConfigValidates) {
  EXPECT_NO_THROW(example::mpc_config().validate());
  MPCConfig bad = example::mpc_config();
  bad.horizon = 0;
  EXPECT_THROW(bad.validate(), Error);
  bad = example::mpc_config();
  bad.tube.rho = 1.0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Mpc, ZeroPlanAtOriginIsFeasible) {
  const MPCConfig cfg = example::mpc_config();
  const Vector zero = Vector::Zero(2);
  const MPCSolution plan = simulate_nominal(zero, std::vector<Vector>(cfg.horizon, Vector::Zero(1)), 0.0, cfg);
  EXPECT_TRUE(check_solution(plan, first_context(zero), cfg).feasible(0.0));
  EXPECT_DOUBLE_EQ(plan.cost, 0.0);
  // Pure disturbance growth: s_k = gamma d^2 (1 - rho^{2k}) / (1 - rho^2).
  const double growth = cfg.tube.disturbance_gain();
  const double r2 = cfg.tube.rho * cfg.tube.rho;
  for (int k = 0; k <= cfg.horizon; ++k)
    EXPECT_NEAR(plan.s_seq[k], growth * (1.0 - std::pow(r2, k)) / (1.0 - r2), 1e-15);
}

TEST(Mpc, OptimumAtOriginIsNearZero) {
  const MPCConfig cfg = example::mpc_config();
  const Vector zero = Vector::Zero(2);
  const MPCSolution sol = solve_ocp(build_ocp(zero, std::nullopt, cfg), std::nullopt, cfg);
  ASSERT_EQ(sol.status, SolveStatus::Optimal);
  EXPECT_LT(sol.cost, 1e-8);
  EXPECT_LT(control_law(sol, zero, cfg.tube).norm(), 1e-5);
}

TEST(Mpc, TerminalPlanIsFeasibleAndCostsTerminalValue) {
  const MPCConfig cfg = example::mpc_config();
  for (double angle : {0.0, 0.7, 1.9, 3.5, 5.2}) {
    const Vector x = inside_terminal(angle, 0.9, cfg);
    const MPCSolution plan = terminal_plan(x, 0.0, cfg);
    const OcpCheck chk = check_solution(plan, first_context(x), cfg);
    EXPECT_TRUE(chk.feasible(kTol)) << "angle " << angle;
    EXPECT_NEAR(plan.cost, cfg.terminal.s_mat.quad(x), 1e-10);

    const MPCSolution opt = solve_ocp(build_ocp(x, std::nullopt, cfg), std::nullopt, cfg);
    ASSERT_EQ(opt.status, SolveStatus::Optimal);
    EXPECT_LE(opt.cost, cfg.terminal.s_mat.quad(x) + kTol);
  }
}

TEST(Mpc, CornerStartIsFeasible) {
  const MPCConfig cfg = example::mpc_config();
  const Vector x0{{0.4, 0.2}};
  const Ocp ocp = build_ocp(x0, std::nullopt, cfg);
  const MPCSolution sol = solve_ocp(ocp, std::nullopt, cfg);
  ASSERT_NE(sol.status, SolveStatus::Infeasible);
  const OcpCheck chk = check_solution(sol, ocp.ctx, cfg);
  EXPECT_TRUE(chk.feasible(kTol));
  EXPECT_LE(chk.squared_violation, kTol);
  EXPECT_LE(sol.s_seq.back(), cfg.terminal.s_omega + kTol);
  const Vector u = control_law(sol, x0, cfg.tube);
  EXPECT_LE(std::abs(u(0)), 0.1 + kTol);
}

TEST(Mpc, InteriorStartPlanSatisfiesBothRowForms) {
  const MPCConfig cfg = example::mpc_config();
  const Vector x0{{0.2, -0.05}};
  const Ocp ocp = build_ocp(x0, std::nullopt, cfg);
  const MPCSolution sol = solve_ocp(ocp, std::nullopt, cfg);
  ASSERT_EQ(sol.status, SolveStatus::Optimal);
  const OcpCheck chk = check_solution(sol, ocp.ctx, cfg);
  EXPECT_LE(chk.row_violation, kTol);
  EXPECT_LE(chk.squared_violation, kTol);
  EXPECT_LE(chk.dynamics_residual, 1e-12);
  // Returned tube sizes follow the recursion with equality.
  for (int k = 0; k < cfg.horizon; ++k) {
    const double energy = cfg.tube.gamma_mat.quad(sol.y_bar[k]);
    EXPECT_NEAR(sol.s_seq[k + 1], tube_predict(sol.s_seq[k], energy, cfg.tube), 1e-15);
  }
  const Vector e0 = x0 - sol.z0;
  const Matrix p11 = cfg.tube.p.mat().topLeftCorner(2, 2);
  EXPECT_NEAR(sol.s_seq[0], e0.dot(p11 * e0), 1e-15);
}

TEST(Mpc, FixedInitialStateIsInfeasibleFromInterior) {
  const MPCConfig cfg = example::mpc_config(InitMode::Fixed);
  const Vector x0{{0.2, -0.05}};
  const MPCSolution sol = solve_ocp(build_ocp(x0, std::nullopt, cfg), std::nullopt, cfg);
  EXPECT_EQ(sol.status, SolveStatus::Infeasible);

  Controller ctrl(cfg);
  try {
    ctrl.step(x0);
    FAIL() << "expected Infeasible";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Infeasible);
  }
}

TEST(Mpc, FarStateIsInfeasible) {
  const MPCConfig cfg = example::mpc_config();
  const MPCSolution sol = solve_ocp(build_ocp(Vector{{0.5, 0.0}}, std::nullopt, cfg), std::nullopt, cfg);
  EXPECT_EQ(sol.status, SolveStatus::Infeasible);
}

TEST(Mpc, ShiftedCandidateIsFeasibleAndDecreasesCost) {
  const MPCConfig cfg = example::mpc_config();
  for (const Vector& x0 : {Vector{{0.2, -0.05}}, Vector{{-0.15, 0.08}}, Vector{{0.4, 0.2}}}) {
    const MPCSolution prev = solve_ocp(build_ocp(x0, std::nullopt, cfg), std::nullopt, cfg);
    ASSERT_NE(prev.status, SolveStatus::Infeasible);
    // Nominal successor: the plant lands on z_{1|0} exactly.
    const Vector x1 = prev.z_bar[1];
    const Ocp ocp = build_ocp(x1, prev, cfg);
    const MPCSolution cand = candidate_shift(prev, cfg);
    EXPECT_TRUE(check_solution(cand, ocp.ctx, cfg).feasible(kTol));
    EXPECT_LE(cand.cost, prev.cost - stage_cost(prev, cfg) + 1e-10);

    const MPCSolution next = solve_ocp(ocp, cand, cfg);
    EXPECT_NE(next.status, SolveStatus::Infeasible);
    EXPECT_LE(next.cost, cand.cost + kTol);
  }
}

TEST(Mpc, CandidateShiftAppendsTerminalFeedback) {
  const MPCConfig cfg = example::mpc_config();
  const Vector x = inside_terminal(0.3, 0.5, cfg);
  const MPCSolution prev = terminal_plan(x, 0.01, cfg);
  const MPCSolution cand = candidate_shift(prev, cfg);
  ASSERT_EQ(cand.v_bar.size(), static_cast<std::size_t>(cfg.horizon));
  for (int k = 0; k + 1 < cfg.horizon; ++k) EXPECT_EQ(cand.v_bar[k], prev.v_bar[k + 1]);
  EXPECT_TRUE(cand.v_bar.back().isApprox(cfg.terminal.k_omega * prev.z_bar.back()));
  EXPECT_EQ(cand.s_seq.front(), prev.s_seq[1]);
  EXPECT_EQ(cand.status, SolveStatus::FeasibleSuboptimal);

  MPCSolution short_plan = prev;
  short_plan.v_bar.pop_back();
  EXPECT_THROW(candidate_shift(short_plan, cfg), Error);
}

TEST(Mpc, WarmStartIsNeverBeaten) {
  const MPCConfig cfg = example::mpc_config();
  const Vector x0{{0.1, 0.05}};
  const MPCSolution prev = solve_ocp(build_ocp(x0, std::nullopt, cfg), std::nullopt, cfg);
  const Vector x1 = prev.z_bar[1] + Vector{{1e-4, -1e-4}};
  const Ocp ocp = build_ocp(x1, prev, cfg);
  const MPCSolution cand = candidate_shift(prev, cfg);
  const MPCSolution sol = solve_ocp(ocp, cand, cfg);
  EXPECT_LE(sol.cost, cand.cost + kTol);
  EXPECT_TRUE(check_solution(sol, ocp.ctx, cfg).feasible(kTol));
}

TEST(Mpc, LeavingTheTubeIsReported) {
  const MPCConfig cfg = example::mpc_config();
  const Vector x0{{0.1, 0.05}};
  const MPCSolution prev = solve_ocp(build_ocp(x0, std::nullopt, cfg), std::nullopt, cfg);
  const Vector far = prev.z_bar[1] + Vector{{0.3, 0.0}};
  try {
    build_ocp(far, prev, cfg);
    FAIL() << "expected ContainmentBroken";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ContainmentBroken);
  }
}

TEST(Mpc, ControlLaw) {
  const MPCConfig cfg = example::mpc_config();
  MPCSolution sol;
  sol.z0 = Vector{{0.1, -0.2}};
  sol.v_bar = {Vector{{0.03}}};
  EXPECT_DOUBLE_EQ(control_law(sol, sol.z0, cfg.tube)(0), 0.03);
  const Vector x{{0.2, -0.1}};
  EXPECT_NEAR(control_law(sol, x, cfg.tube)(0), 0.03 + 0.18 * 0.1 - 0.35 * 0.1, 1e-15);
  sol.v_bar.clear();
  EXPECT_THROW(control_law(sol, x, cfg.tube), Error);
}

TEST(Mpc, ExactModeNeedsFilter) {
  const MPCConfig cfg = example::mpc_config(InitMode::Free, TubeMode::Exact);
  try {
    Controller ctrl(cfg);
    FAIL() << "expected UnsupportedMode";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnsupportedMode);
  }
  try {
    build_ocp(Vector::Zero(2), std::nullopt, cfg);
    FAIL() << "expected UnsupportedMode";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnsupportedMode);
  }
}

TEST(Mpc, ExactModeTracksFilterState) {
  const MPCConfig cfg = example::mpc_config(InitMode::Free, TubeMode::Exact);
  const IQCFilter filt = build_delay_iqc(example::tau_max, 1).filter;
  Controller ctrl(cfg, filt);
  Vector x{{0.2, -0.05}};
  std::vector<double> inputs;
  for (int t = 0; t < 3; ++t) {
    const StepResult res = ctrl.step(x);
    inputs.push_back(res.u(0));
    x = cfg.sys.a * x + cfg.sys.b_u * res.u;
  }
  // Filter state stacks [y_{t-2}; y_{t-1}] with y = u in this example.
  ASSERT_TRUE(ctrl.filter_state().has_value());
  EXPECT_NEAR((*ctrl.filter_state())(0), inputs[1], 1e-15);
  EXPECT_NEAR((*ctrl.filter_state())(1), inputs[2], 1e-15);
  EXPECT_EQ(ctrl.time(), 3);
}

TEST(Mpc, ControllerKeepsCandidateDiagnostics) {
  const MPCConfig cfg = example::mpc_config();
  Controller ctrl(cfg);
  Vector x{{0.2, -0.05}};
  const StepResult first = ctrl.step(x);
  EXPECT_FALSE(first.candidate_check.has_value());
  x = cfg.sys.a * x + cfg.sys.b_u * first.u;
  const StepResult second = ctrl.step(x);
  ASSERT_TRUE(second.candidate_check.has_value());
  EXPECT_TRUE(second.candidate_check->feasible(kTol));
  EXPECT_LE(second.solution.cost, *second.candidate_cost + kTol);
}
