#pragma once

/**
 * @file
 * @brief Offline design: stability and tube-design matrix inequalities, the
 * tightening-minimizing SDP, and terminal ingredients.
 */

#include <cstdint>
#include <optional>
#include <variant>

#include "iqcmpc/design_types.hpp"
#include "iqcmpc/iqc_model.hpp"
#include "iqcmpc/sdp.hpp"

namespace iqcmpc {

/// Input columns of the design inequality for d and for the nominal output ybar.
struct DesignChannels {
  Matrix b_ext;  ///< [[B_d, 0], [B_psi1 D_d, B_psi1]]
  Matrix d_ext;  ///< [D_psi1 D_d, D_psi1]
};

DesignChannels design_channels(const LinearSystem& sys, const IQCFilter& filt);

/// [I 0; A B; C D]' diag(-rho^2 P, P, M) [I 0; A B; C D].
AffineSym stability_lmi(const AugmentedRealization& aug, const AffineSym& p, const AffineSym& m, double rho);

/// diag(gamma Xi, Gamma).
AffineSym disturbance_weight(const AffineSym& gamma, const SymMatrix& xi, const AffineSym& gamma_mat);

/// Design inequality; negative definite at any valid (P, M, Gamma, gamma).
AffineSym design_lmi(const AugmentedRealization& aug, const DesignChannels& ch, const AffineSym& p,
                     const AffineSym& m, const AffineSym& weight, double rho);

/// Design inequality evaluated at numbers.
SymMatrix design_lmi_value(const LinearSystem& sys, const Matrix& k, const IQCFilter& filt, const SymMatrix& p,
                           const SymMatrix& m, double gamma, const SymMatrix& gamma_mat, const SymMatrix& xi,
                           double rho);

/// Either a fixed multiplier or the delay family (M >= M_tau(X) for all tau, X >= 0).
using MultiplierSpec = std::variant<Multiplier, DelayIqc>;

struct DesignInputs {
  LinearSystem sys;
  Matrix k;
  DisturbanceModel dist;
  ConstraintSet cons;
  double rho = 0.0;
  IQCFilter filter;
  MultiplierSpec multiplier;

  void validate() const;
};

struct DesignResult {
  TubeParams tube;
  Multiplier m;
  std::optional<SymMatrix> x_weight;  ///< X of the delay family
  Vector gamma_rows;                  ///< SDP bounds on c_i^2
  double lmi_margin = 0.0;            ///< -lambda_max of the design inequality at the solution
  double objective = 0.0;
};

/// Margin required of the design inequality: 1e-6 times the largest disturbance weight (at least 1).
double design_margin(double gamma, const SymMatrix& gamma_mat, const SymMatrix& xi);

/**
 * @brief Minimizes sum_i c_i^2 over (P, M[, X]) with gamma and Gamma fixed.
 *
 * Per row, c_i^2 <= gamma_i is encoded as
 * [[P22, P21, 0], [P21', P11, g_i], [0, g_i', gamma_i]] >= 0 with g_i = [I K'] F_i'.
 * Throws Infeasible when no (P, M) satisfies the design inequality.
 */
DesignResult minimize_tightening(const DesignInputs& in, double gamma, const SymMatrix& gamma_mat,
                                 const SdpOptions& opts = {});

/// Smallest common g with gamma = g, Gamma = g I under the normalization P11 >= I.
double propose_gamma(const DesignInputs& in, const SdpOptions& opts = {});

/// Row-wise f > sqrt(gamma) d_max / sqrt(1 - rho^2) * c.
bool check_terminal_existence(const ConstraintSet& cons, const TubeParams& tube);

/**
 * @brief Terminal cost S, local gain and the pair (x_omega, s_omega).
 *
 * Without an override, x_omega is bisected (60 steps, conservative end) so that
 * sqrt(x) a_i + sqrt(s_omega(x)) c_i <= f_i holds with
 * s_omega(x) = (x lambda_max(L) + gamma d^2) / (1 - rho^2). With an override the
 * largest x compatible with that s_omega is used. Throws NoTerminalSet.
 */
TerminalSet terminal_ingredients(const LinearSystem& sys, const TubeParams& tube, const ConstraintSet& cons,
                                 const SymMatrix& q, const SymMatrix& r, const Matrix& k_omega,
                                 std::optional<double> s_omega_override = std::nullopt);

/// Largest eigenvalue of S^{-1/2} C_K' Gamma C_K S^{-1/2} with C_K = C + D_u K_omega.
double terminal_output_gain(const LinearSystem& sys, const TubeParams& tube, const TerminalSet& term);

struct TerminalCheck {
  std::size_t samples = 0;
  std::size_t item1_invariance = 0;   ///< violations of the set invariance
  std::size_t item2_constraints = 0;  ///< violations of the tightened constraints
  std::size_t item3_decrease = 0;     ///< violations of the cost decrease
  double worst_item1 = 0.0;
  double worst_item2 = 0.0;
  double worst_item3 = 0.0;

  bool passed() const noexcept { return item1_invariance + item2_constraints + item3_decrease == 0; }
};

/// Uniform samples of Omega (ellipsoid volume times [0, s_omega]) checked against the three terminal conditions.
TerminalCheck check_terminal_set(const LinearSystem& sys, const TubeParams& tube, const ConstraintSet& cons,
                                 const TerminalSet& term, const SymMatrix& q, const SymMatrix& r,
                                 std::size_t samples, std::uint64_t seed);

}  // namespace iqcmpc
