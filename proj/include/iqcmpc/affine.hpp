#pragma once

/**
 * @file
 * @brief Symmetric-matrix-valued affine expressions F(x) = F0 + sum_i x_i F_i.
 *
 * The same expression is used to evaluate a matrix inequality at numbers and
 * to hand it to the SDP solver, so there is one assembly path for both.
 */

#include <initializer_list>
#include <map>
#include <vector>

#include "iqcmpc/lin_core.hpp"

namespace iqcmpc {

class AffineSym {
 public:
  AffineSym() = default;
  explicit AffineSym(Index dim);
  static AffineSym constant(const SymMatrix& c);
  static AffineSym constant(const Matrix& c) { return constant(SymMatrix::symmetrize(c)); }
  /// x_var * coeff.
  static AffineSym term(Index dim, Index var, const Matrix& coeff);

  Index dim() const noexcept { return constant_.rows(); }
  const Matrix& constant_part() const noexcept { return constant_; }
  const std::map<Index, Matrix>& terms() const noexcept { return terms_; }
  bool is_constant() const noexcept { return terms_.empty(); }

  /// T' F(x) T for a constant T with dim() rows.
  AffineSym congruence(const Matrix& t) const;
  /// Places F(x) at (offset, offset) inside a zero matrix of size dim.
  AffineSym embed(Index dim, Index offset) const;
  /// kron(left, F(x)) for a symmetric constant left.
  AffineSym kron_left(const Matrix& left) const;

  static AffineSym block_diag(std::initializer_list<AffineSym> blocks);

  SymMatrix evaluate(const Vector& x) const;

  AffineSym& operator+=(const AffineSym& other);
  AffineSym& operator-=(const AffineSym& other);
  AffineSym& operator*=(double s);

 private:
  Matrix constant_;
  std::map<Index, Matrix> terms_;
};

AffineSym operator+(AffineSym a, const AffineSym& b);
AffineSym operator-(AffineSym a, const AffineSym& b);
AffineSym operator-(AffineSym a);
AffineSym operator*(double s, AffineSym a);

}  // namespace iqcmpc
