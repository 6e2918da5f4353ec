#include "iqcmpc/mpc.hpp"

#include <cmath>
#include <limits>

#include "iqcmpc/tube.hpp"

namespace iqcmpc {

const char* to_string(SolveStatus s) noexcept {
  switch (s) {
    case SolveStatus::Optimal:
      return "Optimal";
    case SolveStatus::FeasibleSuboptimal:
      return "FeasibleSuboptimal";
    case SolveStatus::Infeasible:
      return "Infeasible";
  }
  return "Unknown";
}

void MPCConfig::validate() const {
  sys.validate();
  const Index nx = sys.nx();
  const Index nu = sys.nu();
  require(horizon >= 1, ErrorCode::InvalidArgument, "MPCConfig: horizon must be positive");
  require(q.dim() == nx && r.dim() == nu && s_cost.dim() == nx, ErrorCode::DimensionMismatch,
          "MPCConfig: cost weights have wrong size");
  require(lambda_min(q) > 0.0 && lambda_min(r) > 0.0 && lambda_min(s_cost) > 0.0, ErrorCode::InvalidArgument,
          "MPCConfig: cost weights must be positive definite");
  cons.validate(nx, nu);
  require(tube.nx() == nx && tube.k.rows() == nu && tube.k.cols() == nx && tube.c.size() == cons.rows(),
          ErrorCode::DimensionMismatch, "MPCConfig: tube parameters do not match the plant");
  require(tube.gamma_mat.dim() == sys.ny(), ErrorCode::DimensionMismatch, "MPCConfig: Gamma has wrong size");
  require(tube.rho > 0.0 && tube.rho < 1.0, ErrorCode::InvalidArgument, "MPCConfig: rho must lie in (0, 1)");
  require(terminal.s_mat.dim() == nx && terminal.k_omega.rows() == nu && terminal.k_omega.cols() == nx,
          ErrorCode::DimensionMismatch, "MPCConfig: terminal set does not match the plant");
  require(terminal.x_omega > 0.0 && terminal.s_omega > 0.0, ErrorCode::InvalidArgument,
          "MPCConfig: terminal set must have a nonempty interior");
}

namespace {

Matrix p11(const TubeParams& tube) { return tube.p.mat().topLeftCorner(tube.nx(), tube.nx()); }

// Unit vector of length n with a one at position i.
Vector unit(Index n, Index i) {
  Vector e = Vector::Zero(n);
  e(i) = 1.0;
  return e;
}

double output_energy(const Vector& y, const TubeParams& tube) { return tube.gamma_mat.quad(y); }

}  // namespace

double initial_tube_size(const OcpContext& ctx, const Vector& z0, const MPCConfig& cfg) {
  const TubeParams& tube = cfg.tube;
  const Vector e0 = ctx.x - z0;
  if (!ctx.z_prev1) return e0.dot(p11(tube) * e0);
  const Vector e1 = ctx.x - *ctx.z_prev1;
  if (cfg.tube_mode == TubeMode::Exact) return exact_update(ctx.s_prev1, e1, ctx.psi, e0, tube);
  return tube_measurement_update(ctx.s_prev1, e1, e0, tube);
}

Ocp build_ocp(const Vector& x, const std::optional<MPCSolution>& prev, const MPCConfig& cfg,
              const std::optional<Vector>& psi) {
  const LinearSystem& sys = cfg.sys;
  const TubeParams& tube = cfg.tube;
  const Index nx = sys.nx();
  const Index nu = sys.nu();
  const int horizon = cfg.horizon;
  require(x.size() == nx, ErrorCode::DimensionMismatch, "build_ocp: state has wrong dimension");

  Ocp ocp;
  ocp.ctx.x = x;
  if (prev) {
    require(prev->z_bar.size() >= 2 && prev->s_seq.size() >= 2, ErrorCode::InvalidArgument,
            "build_ocp: previous plan is too short");
    ocp.ctx.z_prev1 = prev->z_bar[1];
    ocp.ctx.s_prev1 = prev->s_seq[1];
  }
  if (cfg.tube_mode == TubeMode::Exact) {
    if (!psi) fail(ErrorCode::UnsupportedMode, "build_ocp: exact mode needs the filter state");
    require(psi->size() == tube.npsi(), ErrorCode::DimensionMismatch, "build_ocp: filter state has wrong dimension");
    ocp.ctx.psi = *psi;
  }
  const bool free_init = cfg.init == InitMode::Free;
  const bool first = !prev.has_value();
  const bool general_shift = free_init && !first && cfg.tube_mode == TubeMode::General;

  Index n = 0;
  if (free_init) {
    ocp.z0_offset = 0;
    n += nx;
  }
  ocp.v_offset = n;
  n += horizon * nu;
  ocp.sigma_offset = n;
  n += horizon + 1;
  if (general_shift) ocp.shift_offset = n++;
  ocp.problem = ConicProblem(n);
  auto sigma = [&](int k) { return unit(n, ocp.sigma_offset + k); };

  // Nominal states as affine maps of the decision.
  Matrix z0_map = Matrix::Zero(nx, n);
  Vector z0_const = Vector::Zero(nx);
  if (free_init) {
    z0_map.middleCols(ocp.z0_offset, nx).setIdentity();
  } else {
    z0_const = first ? x : *ocp.ctx.z_prev1;
  }
  std::vector<Matrix> v_map(horizon, Matrix::Zero(nu, n));
  for (int k = 0; k < horizon; ++k) v_map[k].middleCols(ocp.v_offset + k * nu, nu).setIdentity();
  ocp.z_map.push_back(z0_map);
  ocp.z_const.push_back(z0_const);
  for (int k = 0; k < horizon; ++k) {
    ocp.z_map.push_back(sys.a * ocp.z_map[k] + sys.b_u * v_map[k]);
    ocp.z_const.push_back(sys.a * ocp.z_const[k]);
  }

  // Cost sum |z_k|_Q^2 + |v_k|_R^2 + |z_T|_S^2.
  ConicProblem& prob = ocp.problem;
  auto add_quadratic = [&](const Matrix& map, const Vector& offset, const Matrix& weight) {
    prob.hess += 2.0 * map.transpose() * weight * map;
    prob.lin += 2.0 * map.transpose() * weight * offset;
    ocp.cost_constant += offset.dot(weight * offset);
  };
  for (int k = 0; k < horizon; ++k) {
    add_quadratic(ocp.z_map[k], ocp.z_const[k], cfg.q.mat());
    add_quadratic(v_map[k], Vector::Zero(nu), cfg.r.mat());
  }
  add_quadratic(ocp.z_map[horizon], ocp.z_const[horizon], cfg.s_cost.mat());

  // Tightened constraints and tube propagation.
  const Matrix f_x = cfg.cons.h_mat.leftCols(nx);
  const Matrix f_u = cfg.cons.h_mat.rightCols(nu);
  const Matrix gamma_root = sqrt_psd(tube.gamma_mat).mat();
  const double dist = std::sqrt(tube.disturbance_gain());
  for (int k = 0; k < horizon; ++k) {
    const Matrix row_map = f_x * ocp.z_map[k] + f_u * v_map[k];
    const Vector row_const = f_x * ocp.z_const[k];
    for (Index i = 0; i < cfg.cons.rows(); ++i)
      prob.add_row(row_map.row(i).transpose() + tube.c(i) * sigma(k), cfg.cons.h_vec(i) - row_const(i));

    const Matrix y_map = sys.c * ocp.z_map[k] + sys.d_u * v_map[k];
    const Vector y_const = sys.c * ocp.z_const[k];
    const Index ny = y_map.rows();
    SocConstraint cone;
    cone.a = Matrix::Zero(2 + ny, n);
    cone.b = Vector::Zero(2 + ny);
    cone.a.row(0) = tube.rho * sigma(k).transpose();
    cone.b(1) = dist;
    cone.a.bottomRows(ny) = gamma_root * y_map;
    cone.b.tail(ny) = gamma_root * y_const;
    cone.c = sigma(k + 1);
    cone.name = "tube";
    prob.add_cone(std::move(cone));
  }

  // Terminal set.
  const Matrix s_root = sqrt_psd(cfg.terminal.s_mat).mat();
  prob.add_cone({s_root * ocp.z_map[horizon], s_root * ocp.z_const[horizon], Vector::Zero(n),
                 std::sqrt(cfg.terminal.x_omega), "terminal-state"});
  prob.add_row(sigma(horizon), std::sqrt(cfg.terminal.s_omega));

  // Initial tube size.
  if (!free_init) {
    prob.add_row(-sigma(0), -std::sqrt(initial_tube_size(ocp.ctx, z0_const, cfg)));
  } else if (first) {
    const Matrix root = sqrt_psd(SymMatrix::symmetrize(p11(tube))).mat();
    prob.add_cone({-root * z0_map, root * x, sigma(0), 0.0, "initial"});
  } else if (cfg.tube_mode == TubeMode::General) {
    const Vector e1 = x - *ocp.ctx.z_prev1;
    double room = ocp.ctx.s_prev1 - tube.p_e.quad(e1);
    if (room < -kContainmentDust) fail(ErrorCode::ContainmentBroken, "build_ocp: state left the previous tube");
    room = std::max(room, 0.0);
    const Matrix diff_root = sqrt_psd(tube.p_diff).mat();
    prob.add_cone({-diff_root * z0_map, diff_root * *ocp.ctx.z_prev1, unit(n, ocp.shift_offset), 0.0, "recenter"});
    const Matrix err_root = sqrt_psd(tube.p_e).mat();
    SocConstraint cone;
    cone.a = Matrix::Zero(1 + nx, n);
    cone.b = Vector::Zero(1 + nx);
    cone.a.row(0) = unit(n, ocp.shift_offset).transpose();
    cone.b(0) = std::sqrt(room);
    cone.a.bottomRows(nx) = -err_root * z0_map;
    cone.b.tail(nx) = err_root * x;
    cone.c = sigma(0);
    cone.name = "initial";
    prob.add_cone(std::move(cone));
  } else {
    const Index np = tube.npsi();
    Vector joint1(nx + np);
    joint1 << x - *ocp.ctx.z_prev1, *ocp.ctx.psi;
    double room = ocp.ctx.s_prev1 - tube.p.quad(joint1);
    if (room < -kContainmentDust) fail(ErrorCode::ContainmentBroken, "build_ocp: state left the previous bound");
    room = std::max(room, 0.0);
    const Matrix root = sqrt_psd(tube.p).mat();
    Matrix joint_map = Matrix::Zero(nx + np, n);
    joint_map.topRows(nx) = -z0_map;
    Vector joint_const(nx + np);
    joint_const << x, *ocp.ctx.psi;
    SocConstraint cone;
    cone.a = Matrix::Zero(1 + nx + np, n);
    cone.b = Vector::Zero(1 + nx + np);
    cone.b(0) = std::sqrt(room);
    cone.a.bottomRows(nx + np) = root * joint_map;
    cone.b.tail(nx + np) = root * joint_const;
    cone.c = sigma(0);
    cone.name = "initial";
    prob.add_cone(std::move(cone));
  }
  return ocp;
}

MPCSolution simulate_nominal(const Vector& z0, const std::vector<Vector>& v_bar, double s0, const MPCConfig& cfg) {
  const LinearSystem& sys = cfg.sys;
  MPCSolution sol;
  sol.z0 = z0;
  sol.v_bar = v_bar;
  sol.z_bar.push_back(z0);
  sol.s_seq.push_back(s0);
  double cost = 0.0;
  for (const Vector& v : v_bar) {
    const Vector& z = sol.z_bar.back();
    const Vector y = sys.c * z + sys.d_u * v;
    cost += cfg.q.quad(z) + cfg.r.quad(v);
    sol.y_bar.push_back(y);
    sol.s_seq.push_back(tube_predict(sol.s_seq.back(), output_energy(y, cfg.tube), cfg.tube));
    sol.z_bar.push_back(sys.a * z + sys.b_u * v);
  }
  sol.cost = cost + cfg.s_cost.quad(sol.z_bar.back());
  return sol;
}

MPCSolution candidate_shift(const MPCSolution& prev, const MPCConfig& cfg) {
  require(prev.z_bar.size() == static_cast<std::size_t>(cfg.horizon) + 1 &&
              prev.v_bar.size() == static_cast<std::size_t>(cfg.horizon) &&
              prev.s_seq.size() == static_cast<std::size_t>(cfg.horizon) + 1,
          ErrorCode::DimensionMismatch, "candidate_shift: previous plan does not match the horizon");
  std::vector<Vector> v(prev.v_bar.begin() + 1, prev.v_bar.end());
  v.push_back(cfg.terminal.k_omega * prev.z_bar.back());
  MPCSolution cand = simulate_nominal(prev.z_bar[1], v, prev.s_seq[1], cfg);
  cand.status = SolveStatus::FeasibleSuboptimal;
  return cand;
}

OcpCheck check_solution(const MPCSolution& sol, const OcpContext& ctx, const MPCConfig& cfg) {
  const LinearSystem& sys = cfg.sys;
  const TubeParams& tube = cfg.tube;
  const auto horizon = static_cast<std::size_t>(cfg.horizon);
  require(sol.v_bar.size() == horizon && sol.z_bar.size() == horizon + 1 && sol.s_seq.size() == horizon + 1 &&
              sol.y_bar.size() == horizon,
          ErrorCode::DimensionMismatch, "check_solution: plan does not match the horizon");
  constexpr double lowest = -std::numeric_limits<double>::infinity();
  OcpCheck chk{lowest, lowest, lowest, lowest, 0.0, lowest};
  for (std::size_t k = 0; k < horizon; ++k) {
    const Vector& z = sol.z_bar[k];
    const Vector& v = sol.v_bar[k];
    const Vector residual = cfg.cons.residual(z, v);
    const double root = std::sqrt(std::max(sol.s_seq[k], 0.0));
    for (Index i = 0; i < cfg.cons.rows(); ++i) {
      const double room = -residual(i);
      chk.row_violation = std::max(chk.row_violation, tube.c(i) * root - room);
      const double squared = room >= 0.0 ? tube.c(i) * tube.c(i) * sol.s_seq[k] - room * room : -room;
      chk.squared_violation = std::max(chk.squared_violation, squared);
    }
    const Vector y = sys.c * z + sys.d_u * v;
    chk.dynamics_residual = std::max({chk.dynamics_residual,
                                      (sol.z_bar[k + 1] - sys.a * z - sys.b_u * v).lpNorm<Eigen::Infinity>(),
                                      (sol.y_bar[k] - y).lpNorm<Eigen::Infinity>()});
    chk.tube_violation =
        std::max(chk.tube_violation, tube_predict(sol.s_seq[k], output_energy(y, tube), tube) - sol.s_seq[k + 1]);
  }
  chk.terminal_violation = std::max(cfg.terminal.s_mat.quad(sol.z_bar.back()) - cfg.terminal.x_omega,
                                    sol.s_seq.back() - cfg.terminal.s_omega);
  chk.init_violation = initial_tube_size(ctx, sol.z_bar.front(), cfg) - sol.s_seq.front();
  if (cfg.init == InitMode::Fixed) {
    const Vector& pinned = ctx.z_prev1 ? *ctx.z_prev1 : ctx.x;
    chk.init_violation = std::max(chk.init_violation, (sol.z_bar.front() - pinned).lpNorm<Eigen::Infinity>());
  }
  return chk;
}

namespace {

Vector to_decision(const MPCSolution& sol, const Ocp& ocp, const MPCConfig& cfg) {
  Vector dec = Vector::Zero(ocp.problem.num_vars());
  const Index nx = cfg.sys.nx();
  const Index nu = cfg.sys.nu();
  if (ocp.z0_offset >= 0) dec.segment(ocp.z0_offset, nx) = sol.z0;
  for (int k = 0; k < cfg.horizon; ++k) dec.segment(ocp.v_offset + k * nu, nu) = sol.v_bar[k];
  for (int k = 0; k <= cfg.horizon; ++k) dec(ocp.sigma_offset + k) = std::sqrt(std::max(sol.s_seq[k], 0.0));
  if (ocp.shift_offset >= 0) {
    const Vector delta = *ocp.ctx.z_prev1 - sol.z0;
    dec(ocp.shift_offset) = std::sqrt(std::max(cfg.tube.p_diff.quad(delta), 0.0));
  }
  return dec;
}

// Feasibility tolerance on returned plans; rows are O(1).
constexpr double kPlanTol = 1e-9;

}  // namespace

MPCSolution solve_ocp(const Ocp& ocp, const std::optional<MPCSolution>& warm, const MPCConfig& cfg) {
  const Index nu = cfg.sys.nu();
  std::optional<Vector> start;
  if (warm) start = to_decision(*warm, ocp, cfg);
  auto fallback = [&]() {
    MPCSolution w = *warm;
    w.status = SolveStatus::FeasibleSuboptimal;
    return w;
  };

  ConicSolution raw;
  try {
    raw = solve_conic(ocp.problem, start, cfg.solver);
  } catch (const Error& err) {
    if (warm) return fallback();
    if (err.code() == ErrorCode::Infeasible) {
      MPCSolution none;
      none.status = SolveStatus::Infeasible;
      return none;
    }
    throw;
  }

  const Vector z0 = ocp.z_map[0] * raw.x + ocp.z_const[0];
  std::vector<Vector> v(cfg.horizon);
  for (int k = 0; k < cfg.horizon; ++k) v[k] = raw.x.segment(ocp.v_offset + k * nu, nu);
  MPCSolution sol = simulate_nominal(z0, v, initial_tube_size(ocp.ctx, z0, cfg), cfg);
  sol.status = SolveStatus::Optimal;
  sol.newton_steps = raw.newton_steps;

  if (!check_solution(sol, ocp.ctx, cfg).feasible(kPlanTol)) {
    if (warm) return fallback();
    fail(ErrorCode::NumericalFailure, "solve_ocp: solver returned an infeasible plan");
  }
  if (warm && sol.cost > warm->cost + 1e-9) return fallback();
  return sol;
}

Vector control_law(const MPCSolution& sol, const Vector& x, const TubeParams& tube) {
  require(!sol.v_bar.empty(), ErrorCode::InvalidArgument, "control_law: empty plan");
  return sol.v_bar.front() + tube.k * (x - sol.z0);
}

Controller::Controller(MPCConfig cfg, std::optional<IQCFilter> filter)
    : cfg_(std::move(cfg)), filter_(std::move(filter)) {
  cfg_.validate();
  if (cfg_.tube_mode == TubeMode::Exact) {
    if (!filter_) fail(ErrorCode::UnsupportedMode, "Controller: exact mode needs the filter realization");
    const bool measurable = cfg_.sys.d_w.isZero() && cfg_.sys.d_d.isZero() && filter_->b_psi2.isZero();
    if (!measurable) fail(ErrorCode::UnsupportedMode, "Controller: the filter state is not reconstructible");
    require(filter_->npsi() == cfg_.tube.npsi(), ErrorCode::DimensionMismatch,
            "Controller: filter does not match the tube metric");
    psi_ = Vector::Zero(filter_->npsi());
  }
}

StepResult Controller::step(const Vector& x) {
  StepResult res;
  const Ocp ocp = build_ocp(x, prev_, cfg_, psi_);
  std::optional<MPCSolution> warm;
  if (prev_) {
    warm = candidate_shift(*prev_, cfg_);
    res.candidate_check = check_solution(*warm, ocp.ctx, cfg_);
    res.candidate_cost = warm->cost;
  }
  res.solution = solve_ocp(ocp, warm, cfg_);
  if (res.solution.status == SolveStatus::Infeasible)
    fail(ErrorCode::Infeasible, "Controller: the online problem is infeasible at t = 0");
  res.u = control_law(res.solution, x, cfg_.tube);
  if (psi_) {
    const Vector y = cfg_.sys.c * x + cfg_.sys.d_u * res.u;
    *psi_ = filter_->a_psi * *psi_ + filter_->b_psi1 * y;
  }
  prev_ = res.solution;
  ++t_;
  return res;
}

}  // namespace iqcmpc
