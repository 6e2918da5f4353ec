#include "iqcmpc/affine.hpp"

namespace iqcmpc {

AffineSym::AffineSym(Index dim) : constant_(Matrix::Zero(dim, dim)) {}

AffineSym AffineSym::constant(const SymMatrix& c) {
  AffineSym a;
  a.constant_ = c.mat();
  return a;
}

AffineSym AffineSym::term(Index dim, Index var, const Matrix& coeff) {
  require(coeff.rows() == dim && coeff.cols() == dim, ErrorCode::DimensionMismatch, "AffineSym::term: bad coefficient");
  AffineSym a(dim);
  a.terms_.emplace(var, 0.5 * (coeff + coeff.transpose()));
  return a;
}

AffineSym AffineSym::congruence(const Matrix& t) const {
  require(t.rows() == dim(), ErrorCode::DimensionMismatch, "AffineSym::congruence: row count mismatch");
  AffineSym out;
  out.constant_ = t.transpose() * constant_ * t;
  for (const auto& [var, coeff] : terms_) out.terms_.emplace(var, t.transpose() * coeff * t);
  return out;
}

AffineSym AffineSym::embed(Index n, Index offset) const {
  require(offset >= 0 && offset + dim() <= n, ErrorCode::DimensionMismatch, "AffineSym::embed: block out of range");
  AffineSym out(n);
  out.constant_.block(offset, offset, dim(), dim()) = constant_;
  for (const auto& [var, coeff] : terms_) {
    Matrix big = Matrix::Zero(n, n);
    big.block(offset, offset, dim(), dim()) = coeff;
    out.terms_.emplace(var, std::move(big));
  }
  return out;
}

namespace {

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

}  // namespace

AffineSym AffineSym::kron_left(const Matrix& left) const {
  require(left.rows() == left.cols(), ErrorCode::DimensionMismatch, "AffineSym::kron_left: left factor not square");
  AffineSym out;
  out.constant_ = kron(left, constant_);
  for (const auto& [var, coeff] : terms_) out.terms_.emplace(var, kron(left, coeff));
  return out;
}

AffineSym AffineSym::block_diag(std::initializer_list<AffineSym> blocks) {
  Index n = 0;
  for (const auto& b : blocks) n += b.dim();
  AffineSym out(n);
  Index offset = 0;
  for (const auto& b : blocks) {
    out += b.embed(n, offset);
    offset += b.dim();
  }
  return out;
}

SymMatrix AffineSym::evaluate(const Vector& x) const {
  Matrix m = constant_;
  for (const auto& [var, coeff] : terms_) {
    require(var < x.size(), ErrorCode::DimensionMismatch, "AffineSym::evaluate: variable index out of range");
    m += x(var) * coeff;
  }
  return SymMatrix::symmetrize(m);
}

AffineSym& AffineSym::operator+=(const AffineSym& other) {
  if (constant_.size() == 0 && terms_.empty()) {
    *this = other;
    return *this;
  }
  require(other.dim() == dim(), ErrorCode::DimensionMismatch, "AffineSym: adding expressions of different size");
  constant_ += other.constant_;
  for (const auto& [var, coeff] : other.terms_) {
    auto it = terms_.find(var);
    if (it == terms_.end())
      terms_.emplace(var, coeff);
    else
      it->second += coeff;
  }
  return *this;
}

AffineSym& AffineSym::operator-=(const AffineSym& other) { return *this += -other; }

AffineSym& AffineSym::operator*=(double s) {
  constant_ *= s;
  for (auto& [var, coeff] : terms_) coeff *= s;
  return *this;
}

AffineSym operator+(AffineSym a, const AffineSym& b) { return a += b; }
AffineSym operator-(AffineSym a, const AffineSym& b) { return a -= b; }
AffineSym operator-(AffineSym a) { return a *= -1.0; }
AffineSym operator*(double s, AffineSym a) { return a *= s; }

}  // namespace iqcmpc
