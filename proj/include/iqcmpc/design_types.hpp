#pragma once

#include "iqcmpc/lin_core.hpp"

namespace iqcmpc {

/// Everything the online stage needs from the offline tube design.
struct TubeParams {
  double rho = 0.0;
  SymMatrix p;       ///< joint metric on [error; filter state]
  SymMatrix p_e;     ///< Schur complement on the error block
  SymMatrix p_diff;  ///< P11 - p_e
  double gamma = 0.0;
  SymMatrix gamma_mat;
  Matrix k;
  Vector c;  ///< per-row tightening
  double d_max = 0.0;

  Index nx() const noexcept { return p_e.dim(); }
  Index npsi() const noexcept { return p.dim() - p_e.dim(); }
  /// gamma * d_max^2, the disturbance contribution to one tube step.
  double disturbance_gain() const noexcept { return gamma * d_max * d_max; }
};

/// Omega = {(z, s) : |z|_S^2 <= x_omega, 0 <= s <= s_omega} with local gain k_omega.
struct TerminalSet {
  Matrix k_omega;
  SymMatrix s_mat;
  double x_omega = 0.0;
  double s_omega = 0.0;

  bool contains(const Vector& z, double s, double tol = 0.0) const {
    return s_mat.quad(z) <= x_omega + tol && s >= -tol && s <= s_omega + tol;
  }
};

}  // namespace iqcmpc
