#pragma once

/**
 * @file
 * @brief Online tube MPC: problem construction, the shifted candidate, the
 * solver wrapper, the applied control law and a stateful controller.
 *
 * In terms of sigma_k = sqrt(s_k) every constraint of the online problem is a
 * linear row or a second-order cone:
 *   F [z_k; v_k] + c sigma_k <= f
 *   sigma_{k+1} >= |(rho sigma_k, sqrt(gamma) d_max, Gamma^{1/2} ybar_k)|
 *   |z_T|_S <= sqrt(x_omega),  sigma_T <= sqrt(s_omega)
 * The tube recursion is relaxed to inequalities inside the solver; the returned
 * tube sizes are re-simulated with equalities.
 */

#include <optional>
#include <string>
#include <vector>

#include "iqcmpc/conic.hpp"
#include "iqcmpc/design_types.hpp"
#include "iqcmpc/iqc_model.hpp"

namespace iqcmpc {

/// How the initial nominal state is chosen.
enum class InitMode {
  Free,   ///< z_{0|t} is a decision variable
  Fixed,  ///< z_{0|t} = z_{1|t-1}, and z_{0|0} = x_0
};

/// How the initial tube size is re-centered at t >= 1.
enum class TubeMode {
  General,  ///< only the error is known
  Exact,    ///< the filter state is known as well
};

enum class SolveStatus { Optimal, FeasibleSuboptimal, Infeasible };

const char* to_string(SolveStatus s) noexcept;

struct MPCConfig {
  int horizon = 0;
  SymMatrix q, r, s_cost;
  TerminalSet terminal;
  TubeParams tube;
  LinearSystem sys;
  ConstraintSet cons;
  InitMode init = InitMode::Free;
  TubeMode tube_mode = TubeMode::General;
  ConicOptions solver;

  void validate() const;
};

struct MPCSolution {
  std::vector<Vector> v_bar;  ///< T nominal inputs
  std::vector<Vector> z_bar;  ///< T + 1 nominal states
  std::vector<Vector> y_bar;  ///< T nominal outputs
  std::vector<double> s_seq;  ///< T + 1 tube sizes
  Vector z0;
  double cost = 0.0;
  SolveStatus status = SolveStatus::Infeasible;
  int newton_steps = 0;
};

/// Data of the online problem at time t that do not depend on the decision.
struct OcpContext {
  Vector x;                       ///< measured state
  std::optional<Vector> z_prev1;  ///< z_{1|t-1}; absent at t = 0
  double s_prev1 = 0.0;           ///< s_{1|t-1}
  std::optional<Vector> psi;      ///< filter state, exact mode only
};

/**
 * @brief The online problem as a second-order cone program.
 *
 * Decision layout: [z0 (free mode only); v_0..v_{T-1}; sigma_0..sigma_T; r (general mode, t >= 1)].
 */
struct Ocp {
  OcpContext ctx;
  ConicProblem problem;
  Index z0_offset = -1;
  Index v_offset = 0;
  Index sigma_offset = 0;
  Index shift_offset = -1;  ///< r >= |z_{1|t-1} - z0|_{P_diff}
  std::vector<Matrix> z_map;  ///< z_k = z_map[k] * decision + z_const[k]
  std::vector<Vector> z_const;
  double cost_constant = 0.0;
};

/// Tube size s_{0|t} induced by the initial nominal state z0.
double initial_tube_size(const OcpContext& ctx, const Vector& z0, const MPCConfig& cfg);

Ocp build_ocp(const Vector& x, const std::optional<MPCSolution>& prev, const MPCConfig& cfg,
              const std::optional<Vector>& psi = std::nullopt);

/// Nominal trajectory, outputs, exact tube sizes and cost from (z0, v, s0).
MPCSolution simulate_nominal(const Vector& z0, const std::vector<Vector>& v_bar, double s0, const MPCConfig& cfg);

/// Previous plan shifted by one step and completed with the terminal feedback.
MPCSolution candidate_shift(const MPCSolution& prev, const MPCConfig& cfg);

struct OcpCheck {
  double row_violation = 0.0;       ///< max_i,k F_i [z; v] + c_i sqrt(s_k) - f_i
  double squared_violation = 0.0;   ///< same rows in the squared form c_i^2 s_k - (f_i - F_i [z; v])^2
  double terminal_violation = 0.0;  ///< max(|z_T|_S^2 - x_omega, s_T - s_omega)
  double tube_violation = 0.0;      ///< max_k tube_predict(s_k, .) - s_{k+1}
  double dynamics_residual = 0.0;
  double init_violation = 0.0;      ///< s_{0|t} below the value implied by z0

  bool feasible(double tol) const {
    return row_violation <= tol && terminal_violation <= tol && tube_violation <= tol && dynamics_residual <= tol &&
           init_violation <= tol;
  }
};

OcpCheck check_solution(const MPCSolution& sol, const OcpContext& ctx, const MPCConfig& cfg);

/**
 * @brief Solves the online problem. With a warm start the result never costs
 * more than the warm start; without one, Infeasible is returned as a status.
 */
MPCSolution solve_ocp(const Ocp& ocp, const std::optional<MPCSolution>& warm, const MPCConfig& cfg);

/// u = v_0 + K (x - z_0).
Vector control_law(const MPCSolution& sol, const Vector& x, const TubeParams& tube);

struct StepResult {
  Vector u;
  MPCSolution solution;
  std::optional<OcpCheck> candidate_check;  ///< shifted candidate, t >= 1
  std::optional<double> candidate_cost;
};

/**
 * @brief Receding-horizon controller, one instance per plant.
 *
 * In exact mode the filter state is propagated from the applied inputs, which
 * requires an output y = C x + D_u u that does not see w or d and a filter
 * that does not see w.
 */
class Controller {
 public:
  Controller(MPCConfig cfg, std::optional<IQCFilter> filter = std::nullopt);

  /// Throws Infeasible at t = 0 and ContainmentBroken if the tube was left.
  StepResult step(const Vector& x);

  int time() const noexcept { return t_; }
  const MPCConfig& config() const noexcept { return cfg_; }
  const std::optional<MPCSolution>& previous() const noexcept { return prev_; }
  const std::optional<Vector>& filter_state() const noexcept { return psi_; }

 private:
  MPCConfig cfg_;
  std::optional<IQCFilter> filter_;
  std::optional<MPCSolution> prev_;
  std::optional<Vector> psi_;
  int t_ = 0;
};

}  // namespace iqcmpc
