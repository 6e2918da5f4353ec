#pragma once

/**
 * @file
 * @brief Tube-size recursions and error containment checks.
 *
 * The tube at prediction step k is the ellipsoid |e|_{P_e}^2 <= s_k around the
 * nominal state.
 */

#include <optional>
#include <vector>

#include "iqcmpc/design_types.hpp"
#include "iqcmpc/iqc_model.hpp"

namespace iqcmpc {

/// c_i = |P_e^{-1/2} [I; K]' F_i'|, the largest value of F_i [e; K e] over |e|_{P_e} <= 1.
Vector tighten_vector(const SymMatrix& p_e, const Matrix& k, const ConstraintSet& cons);

/// s+ = rho^2 s + gamma d_max^2 + |ybar|_Gamma^2.
double tube_predict(double s, double ybar_sq_gamma, const TubeParams& tube);

/// Negative dust down to this value is treated as zero under the square root.
inline constexpr double kContainmentDust = 1e-9;

/**
 * @brief Tube size after re-centering the nominal state from x - e1 to x - e0.
 *
 * s0 = s1 + |e0|^2_Pe - |e1|^2_Pe + |e0-e1|^2_Pd + 2 |e0-e1|_Pd sqrt(s1 - |e1|^2_Pe).
 * Throws ContainmentBroken if s1 < |e1|^2_Pe beyond kContainmentDust.
 */
double tube_measurement_update(double s1, const Vector& e1, const Vector& e0, const TubeParams& tube);

/// Same re-centering with the filter state known: c0 = c1 + |[e0; psi]|_P^2 - |[e1; psi]|_P^2.
double exact_update(double c1, const Vector& e1, const std::optional<Vector>& psi1, const Vector& e0,
                    const TubeParams& tube);

/// One claimed bound |e_{k|t}|^2_Pe <= s_{k|t}.
struct ContainmentSample {
  int t = 0;
  int k = 0;
  Vector error;
  double s = 0.0;
};

struct ContainmentViolation {
  int t = 0;
  int k = 0;
  double slack = 0.0;  ///< s - |e|^2_Pe, negative
};

struct ContainmentReport {
  std::vector<ContainmentViolation> violations;
  double min_slack = 0.0;
  std::size_t checked = 0;

  bool certified() const noexcept { return violations.empty(); }
};

ContainmentReport verify_containment(const std::vector<ContainmentSample>& samples, const TubeParams& tube,
                                     double tol = 0.0);

}  // namespace iqcmpc
