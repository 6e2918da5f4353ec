#pragma once

/**
 * @file
 * @brief Small dense convex programs with a quadratic objective, linear
 * inequalities and second-order cones, solved by a log barrier method.
 *
 * minimize 0.5 x'Hx + q'x  subject to  G x <= h,  |A_j x + b_j| <= c_j'x + d_j.
 */

#include <optional>
#include <string>
#include <vector>

#include "iqcmpc/lin_core.hpp"

namespace iqcmpc {

/// |a x + b| <= c'x + d.
struct SocConstraint {
  Matrix a;
  Vector b;
  Vector c;
  double d = 0.0;
  std::string name;
};

struct ConicProblem {
  Matrix hess;  ///< positive semidefinite objective curvature
  Vector lin;
  Matrix g;  ///< linear rows G x <= h
  Vector h;
  std::vector<SocConstraint> cones;

  explicit ConicProblem(Index nvars = 0);

  Index num_vars() const noexcept { return lin.size(); }
  void add_row(const Vector& row, double bound);
  void add_cone(SocConstraint cone);
  double objective(const Vector& x) const { return 0.5 * x.dot(hess * x) + lin.dot(x); }
  /// Largest constraint violation at x (nonpositive when x is feasible).
  double max_violation(const Vector& x) const;
};

struct ConicOptions {
  double gap_tol = 1e-9;      ///< relative barrier duality gap
  double path_factor = 20.0;  ///< barrier weight growth per outer step
  int max_newton = 800;       ///< total Newton steps over both phases
  double radius = 1e4;        ///< iterates are kept inside |x| < radius
  /// Phase-I slack below which a feasible set without interior is accepted;
  /// rows and cones are then relaxed by this amount.
  double feas_tol = 1e-11;
};

struct ConicSolution {
  Vector x;
  double objective = 0.0;
  int newton_steps = 0;
  double relaxation = 0.0;  ///< amount by which constraints were relaxed (0 or feas_tol)
};

/**
 * Phase I starts from `start` (or the origin) and is skipped when that point is
 * strictly feasible. When the feasible set has no interior the problem is
 * solved with every constraint relaxed by feas_tol. Throws Infeasible when no strictly feasible point exists,
 * MaxIterations when the Newton budget runs out, NumericalFailure on breakdown.
 */
ConicSolution solve_conic(const ConicProblem& prob, const std::optional<Vector>& start = std::nullopt,
                          const ConicOptions& opts = {});

}  // namespace iqcmpc
