#include "iqcmpc/lin_core.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace iqcmpc {

namespace {

constexpr int kJacobiMaxSweeps = 100;
constexpr int kRiccatiMaxIter = 10000;
constexpr double kRiccatiTol = 1e-12;
constexpr double kMaxCondition = 1e12;

}  // namespace

SymMatrix::SymMatrix(const Matrix& m) {
  require(m.rows() == m.cols(), ErrorCode::DimensionMismatch, "SymMatrix: matrix is not square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * scale) {
    std::ostringstream os;
    os << "SymMatrix: asymmetry " << asym << " exceeds tolerance";
    fail(ErrorCode::InvalidArgument, os.str());
  }
  m_ = 0.5 * (m + m.transpose());
}

SymMatrix SymMatrix::symmetrize(const Matrix& m) {
  require(m.rows() == m.cols(), ErrorCode::DimensionMismatch, "SymMatrix: matrix is not square");
  SymMatrix s;
  s.m_ = 0.5 * (m + m.transpose());
  return s;
}

SymEigen sym_eig(const SymMatrix& m) {
  const Index n = m.dim();
  Matrix a = m.mat();
  Matrix v = Matrix::Identity(n, n);

  const double total = a.norm();
  bool converged = n <= 1 || total == 0.0;
  for (int sweep = 0; sweep < kJacobiMaxSweeps && !converged; ++sweep) {
    double off = 0.0;
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (std::sqrt(2.0 * off) <= 1e-15 * total) {
      converged = true;
      break;
    }
    for (Index p = 0; p < n - 1; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (!converged) {
    double off = 0.0;
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (std::sqrt(2.0 * off) > 1e-13 * total)
      fail(ErrorCode::NumericalFailure, "sym_eig: Jacobi iteration did not converge");
  }

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index i, Index j) { return a(i, i) < a(j, j); });
  SymEigen out{Vector(n), Matrix(n, n)};
  for (Index i = 0; i < n; ++i) {
    out.values(i) = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
    out.vectors.col(i) = v.col(order[static_cast<std::size_t>(i)]);
  }
  return out;
}

const char* to_string(Definiteness d) noexcept {
  switch (d) {
    case Definiteness::PosDef: return "PosDef";
    case Definiteness::NegDef: return "NegDef";
    case Definiteness::Indefinite: return "Indefinite";
    case Definiteness::Singular: return "Singular";
  }
  return "?";
}

Definiteness definiteness(const SymMatrix& m, double margin) {
  require(margin >= 0.0, ErrorCode::InvalidArgument, "definiteness: margin must be nonnegative");
  const Vector ev = sym_eig(m).values;
  if (ev.size() == 0) return Definiteness::Singular;
  if (ev.minCoeff() > margin) return Definiteness::PosDef;
  if (ev.maxCoeff() < -margin) return Definiteness::NegDef;
  if ((ev.array().abs() <= margin).any()) return Definiteness::Singular;
  return Definiteness::Indefinite;
}

double lambda_min(const SymMatrix& m) { return sym_eig(m).values.minCoeff(); }
double lambda_max(const SymMatrix& m) { return sym_eig(m).values.maxCoeff(); }

SchurSplit schur_reduce(const SymMatrix& p, Index split) {
  const Index n = p.dim();
  require(split > 0 && split < n, ErrorCode::InvalidArgument, "schur_reduce: split out of range");
  const Matrix& pm = p.mat();
  const Index m = n - split;
  const Matrix p11 = pm.topLeftCorner(split, split);
  const Matrix p21 = pm.bottomLeftCorner(m, split);
  const SymMatrix p22 = SymMatrix::symmetrize(pm.bottomRightCorner(m, m));

  const Vector ev = sym_eig(p22).values;
  if (ev.minCoeff() <= 0.0 || ev.maxCoeff() > kMaxCondition * ev.minCoeff())
    fail(ErrorCode::IllConditioned, "schur_reduce: P22 is singular or ill-conditioned");

  const Matrix correction = p21.transpose() * p22.mat().ldlt().solve(p21);
  SchurSplit out;
  out.p_e = SymMatrix::symmetrize(p11 - correction);
  out.p_diff = SymMatrix::symmetrize(p11 - out.p_e.mat());
  return out;
}

double spectral_radius(const Matrix& a) {
  require(a.rows() == a.cols(), ErrorCode::DimensionMismatch, "spectral_radius: not square");
  if (a.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(a, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

SymMatrix solve_discrete_lyapunov(const Matrix& a_cl, const SymMatrix& q) {
  const Index n = a_cl.rows();
  require(a_cl.cols() == n && q.dim() == n, ErrorCode::DimensionMismatch,
          "solve_discrete_lyapunov: dimension mismatch");
  if (spectral_radius(a_cl) >= 1.0)
    fail(ErrorCode::NotSchurStable, "solve_discrete_lyapunov: closed loop is not Schur stable");

  // vec(A' S A) = (A' kron A') vec(S)
  const Matrix at = a_cl.transpose();
  Matrix kron(n * n, n * n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) kron.block(i * n, j * n, n, n) = at(i, j) * at;
  kron -= Matrix::Identity(n * n, n * n);
  const Vector rhs = -Eigen::Map<const Vector>(q.mat().data(), n * n);
  const Vector sol = kron.partialPivLu().solve(rhs);
  return SymMatrix::symmetrize(Eigen::Map<const Matrix>(sol.data(), n, n));
}

SymMatrix riccati_solution(const Matrix& a, const Matrix& b, const SymMatrix& q, const SymMatrix& r) {
  const Index n = a.rows();
  const Index m = b.cols();
  require(a.cols() == n && b.rows() == n && q.dim() == n && r.dim() == m, ErrorCode::DimensionMismatch,
          "lqr_gain: dimension mismatch");
  require(lambda_min(r) > 0.0, ErrorCode::InvalidArgument, "lqr_gain: R must be positive definite");

  Matrix x = q.mat();
  for (int it = 0; it < kRiccatiMaxIter; ++it) {
    const Matrix btx = b.transpose() * x;
    const Matrix s = r.mat() + btx * b;
    const Matrix next = q.mat() + a.transpose() * x * a - (btx * a).transpose() * s.ldlt().solve(btx * a);
    const Matrix sym = 0.5 * (next + next.transpose());
    if (!sym.allFinite() || sym.norm() > 1e14)
      fail(ErrorCode::NotStabilizable, "lqr_gain: Riccati iteration diverged");
    const double delta = (sym - x).norm();
    x = sym;
    if (delta <= kRiccatiTol * std::max(1.0, x.norm())) return SymMatrix::symmetrize(x);
  }
  fail(ErrorCode::NotStabilizable, "lqr_gain: Riccati iteration did not converge");
}

Matrix lqr_gain(const Matrix& a, const Matrix& b, const SymMatrix& q, const SymMatrix& r) {
  const SymMatrix x = riccati_solution(a, b, q, r);
  const Matrix btx = b.transpose() * x.mat();
  const Matrix gain = -(r.mat() + btx * b).ldlt().solve(btx * a);
  if (spectral_radius(a + b * gain) >= 1.0)
    fail(ErrorCode::NotStabilizable, "lqr_gain: resulting closed loop is not Schur stable");
  return gain;
}

SymMatrix sqrt_psd(const SymMatrix& m) {
  const SymEigen e = sym_eig(m);
  const double scale = std::max(1.0, e.values.cwiseAbs().maxCoeff());
  Vector root(e.values.size());
  for (Index i = 0; i < root.size(); ++i) {
    const double v = e.values(i);
    if (v < -1e-10 * scale) fail(ErrorCode::InvalidArgument, "sqrt_psd: matrix is not positive semidefinite");
    root(i) = std::sqrt(std::max(v, 0.0));
  }
  return SymMatrix::symmetrize(e.vectors * root.asDiagonal() * e.vectors.transpose());
}

SymMatrix inv_sqrt(const SymMatrix& m) {
  const SymEigen e = sym_eig(m);
  const double lo = e.values.minCoeff();
  const double hi = e.values.maxCoeff();
  if (lo <= 0.0) fail(ErrorCode::IllConditioned, "inv_sqrt: matrix is not positive definite");
  if (hi > kMaxCondition * lo) fail(ErrorCode::IllConditioned, "inv_sqrt: condition number exceeds 1e12");
  const Vector root = e.values.array().rsqrt();
  return SymMatrix::symmetrize(e.vectors * root.asDiagonal() * e.vectors.transpose());
}

double max_generalized_eig(const SymMatrix& a, const SymMatrix& b) {
  const SymMatrix w = inv_sqrt(b);
  return lambda_max(SymMatrix::symmetrize(w.mat() * a.mat() * w.mat()));
}

}  // namespace iqcmpc
