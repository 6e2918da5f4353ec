#pragma once

/**
 * @file
 * @brief Dense small-matrix kernel: symmetric eigenproblems, definiteness,
 * Schur complements, discrete Lyapunov equations and an LQR helper.
 *
 * Everything here works on Eigen dynamic matrices of dimension <= ~16 and is
 * free of shared state.
 */

#include <Eigen/Core>

#include "iqcmpc/error.hpp"

namespace iqcmpc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/**
 * @brief Symmetric matrix stored in symmetrized form.
 *
 * The checking constructor rejects inputs whose asymmetry exceeds 1e-12
 * relative to the largest entry; symmetrize() accepts anything square.
 */
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(const Matrix& m);

  /// Averages m and its transpose without checking.
  static SymMatrix symmetrize(const Matrix& m);
  static SymMatrix identity(Index n) { return symmetrize(Matrix::Identity(n, n)); }
  static SymMatrix zero(Index n) { return symmetrize(Matrix::Zero(n, n)); }

  const Matrix& mat() const noexcept { return m_; }
  Index dim() const noexcept { return m_.rows(); }
  double operator()(Index i, Index j) const { return m_(i, j); }

  /// ||x||^2 in this metric, x' M x.
  double quad(const Vector& x) const { return x.dot(m_ * x); }

 private:
  Matrix m_;
};

struct SymEigen {
  Vector values;   ///< ascending
  Matrix vectors;  ///< orthonormal columns, vectors.col(i) pairs with values(i)
};

/// Cyclic Jacobi eigensolver. Throws NumericalFailure if the sweep cap is hit.
SymEigen sym_eig(const SymMatrix& m);

enum class Definiteness { PosDef, NegDef, Indefinite, Singular };

const char* to_string(Definiteness d) noexcept;

Definiteness definiteness(const SymMatrix& m, double margin);

double lambda_min(const SymMatrix& m);
double lambda_max(const SymMatrix& m);

struct SchurSplit {
  SymMatrix p_e;     ///< P11 - P21' P22^{-1} P21
  SymMatrix p_diff;  ///< P11 - p_e
};

/// Splits P after the first `split` rows/cols. Throws IllConditioned if P22 is singular.
SchurSplit schur_reduce(const SymMatrix& p, Index split);

/// Solves A' S A - S = -Q. Throws NotSchurStable if rho(A) >= 1.
SymMatrix solve_discrete_lyapunov(const Matrix& a_cl, const SymMatrix& q);

/// Spectral radius of a general square matrix.
double spectral_radius(const Matrix& a);

/**
 * @brief Discrete LQR gain with the convention u = gain * x.
 *
 * Fixed-point Riccati iteration, at most 10 000 iterations, relative
 * convergence 1e-12. Throws NotStabilizable when the iteration diverges or
 * stalls.
 */
Matrix lqr_gain(const Matrix& a, const Matrix& b, const SymMatrix& q, const SymMatrix& r);

/// Riccati solution X paired with lqr_gain (useful as an LQR terminal cost).
SymMatrix riccati_solution(const Matrix& a, const Matrix& b, const SymMatrix& q, const SymMatrix& r);

/// Principal square root of a PSD matrix (negative eigenvalues within dust are clamped).
SymMatrix sqrt_psd(const SymMatrix& m);

/// M^{-1/2}; refuses (IllConditioned) when cond(M) > 1e12 or M is not positive definite.
SymMatrix inv_sqrt(const SymMatrix& m);

/// Largest generalized eigenvalue of (A, B) with B positive definite: max x'Ax / x'Bx.
double max_generalized_eig(const SymMatrix& a, const SymMatrix& b);

}  // namespace iqcmpc
