#pragma once

/**
 * @file
 * @brief Small dense semidefinite programs solved by a log-det barrier method.
 *
 * minimize c'x  subject to  F_j(x) >= margin_j I  (or <= -margin_j I).
 *
 * A phase-I problem (minimize s with F_j(x) + s I > 0) finds a strictly
 * feasible point; the barrier path is then followed with damped Newton steps.
 * Sized for a few hundred variables and blocks up to ~20x20.
 */

#include <optional>
#include <string>
#include <vector>

#include "iqcmpc/affine.hpp"

namespace iqcmpc {

enum class LmiSense { PosDef, NegDef };

struct ScalarVar {
  Index index = -1;
  AffineSym expr() const { return AffineSym::term(1, index, Matrix::Ones(1, 1)); }
};

struct SymVar {
  Index offset = -1;
  Index dim = 0;
  /// The variable as a dim x dim affine expression.
  AffineSym expr() const;
};

struct SdpOptions {
  double gap_tol = 1e-8;       ///< relative barrier duality gap
  double path_factor = 10.0;   ///< barrier weight growth per outer step
  int max_newton = 2000;       ///< total Newton steps over both phases
  double radius = 1e6;         ///< iterates are kept inside |x| < radius
};

struct SdpSolution {
  Vector x;
  double objective = 0.0;
  /// min_j (lambda_min(sense_j F_j(x)) - margin_j); nonnegative on success.
  double margin = 0.0;
  int newton_steps = 0;

  double value(ScalarVar v) const { return x(v.index); }
  SymMatrix value(const SymVar& v) const;
};

class SdpProblem {
 public:
  ScalarVar add_scalar(std::optional<double> lower = std::nullopt, std::optional<double> upper = std::nullopt);
  SymVar add_symmetric(Index dim);

  void add_lmi(AffineSym expr, LmiSense sense, double margin = 0.0, std::string name = {});
  /// Objective from a 1x1 expression; the constant part is ignored.
  void minimize(const AffineSym& scalar);

  Index num_vars() const noexcept { return nvars_; }

  struct Constraint {
    AffineSym expr;
    LmiSense sense;
    double margin;
    std::string name;
  };
  const std::vector<Constraint>& constraints() const noexcept { return cons_; }
  const Vector& objective() const noexcept { return cost_; }

 private:
  Index nvars_ = 0;
  std::vector<Constraint> cons_;
  Vector cost_;
};

/**
 * Throws Infeasible when phase I certifies a positive optimal slack,
 * MaxIterations when the Newton budget runs out, NumericalFailure on breakdown.
 * A solution on the radius boundary signals an unbounded objective.
 */
SdpSolution solve_sdp(const SdpProblem& prob, const SdpOptions& opts = {});

}  // namespace iqcmpc
