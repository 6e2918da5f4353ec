#pragma once

// Independent numerical oracles shared by the unit suites and the acceptance binary.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>

#include "iqcmpc/lin_core.hpp"

namespace oracle {

using iqcmpc::Index;
using iqcmpc::Matrix;
using iqcmpc::SymMatrix;
using iqcmpc::Vector;

/// Row value F_i [e; K e] for an error e.
inline double row_response(const Vector& row, const Matrix& k, const Vector& e) {
  const Index nx = e.size();
  return row.head(nx).dot(e) + row.tail(k.rows()).dot(k * e);
}

/// Maximum of F_i [e; K e] over random points of the boundary |e|_{P_e} = 1.
inline double sampled_row_max(const SymMatrix& p_e, const Matrix& k, const Vector& row, int samples,
                              std::uint64_t seed) {
  const Eigen::LLT<Matrix> llt(p_e.mat());
  const Matrix upper = llt.matrixU();
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  double best = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < samples; ++s) {
    Vector dir(p_e.dim());
    for (Index i = 0; i < dir.size(); ++i) dir(i) = normal(gen);
    dir.normalize();
    // |U^{-1} dir|_{P_e} = |dir| = 1.
    const Vector e = upper.triangularView<Eigen::Upper>().solve(dir);
    best = std::max(best, row_response(row, k, e));
  }
  return best;
}

/// Boundary point maximizing the row response, found by the stationarity condition P_e e = mu g.
inline Vector row_maximizer(const SymMatrix& p_e, const Matrix& k, const Vector& row) {
  const Index nx = p_e.dim();
  const Vector g = row.head(nx) + k.transpose() * row.tail(k.rows());
  const Vector dir = p_e.mat().ldlt().solve(g);
  const double scale = std::sqrt(dir.dot(p_e.mat() * dir));
  return scale > 0.0 ? Vector(dir / scale) : Vector(Vector::Zero(nx));
}

/**
 * Maximum over psi of |[e0; psi]|_P^2 - |[e1; psi]|_P^2 subject to |[e1; psi]|_P^2 <= s1,
 * for a two-dimensional filter state. The feasible ellipse is parametrized by angle,
 * scanned on a grid and refined by golden-section search.
 */
inline double recenter_max(const SymMatrix& p, Index nx, double s1, const Vector& e1, const Vector& e0) {
  const Index np = p.dim() - nx;
  const Matrix p22 = p.mat().bottomRightCorner(np, np);
  const Matrix p21 = p.mat().bottomLeftCorner(np, nx);
  // |[e1; psi]|^2 = |psi - centre|^2_{P22} + offset
  const Vector centre = -p22.ldlt().solve(p21 * e1);
  auto joint = [&](const Vector& e, const Vector& psi) {
    Vector v(p.dim());
    v << e, psi;
    return p.quad(v);
  };
  const double offset = joint(e1, centre);
  const double radius_sq = s1 - offset;
  if (radius_sq < 0.0) return std::numeric_limits<double>::quiet_NaN();
  const Eigen::LLT<Matrix> llt(p22);
  const Matrix upper = llt.matrixU();
  auto objective = [&](double angle) {
    Vector dir(np);
    dir << std::cos(angle), std::sin(angle);
    const Vector psi = centre + std::sqrt(radius_sq) * upper.triangularView<Eigen::Upper>().solve(dir);
    return joint(e0, psi) - joint(e1, psi);
  };
  constexpr int grid = 3600;
  const double step = 2.0 * std::numbers::pi / grid;
  int best = 0;
  double best_val = objective(0.0);
  for (int i = 1; i < grid; ++i) {
    const double val = objective(i * step);
    if (val > best_val) {
      best_val = val;
      best = i;
    }
  }
  double lo = (best - 1) * step;
  double hi = (best + 1) * step;
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
    const double a = hi - ratio * (hi - lo);
    const double b = lo + ratio * (hi - lo);
    if (objective(a) < objective(b)) {
      lo = a;
    } else {
      hi = b;
    }
  }
  return std::max(best_val, objective(0.5 * (lo + hi)));
}

/// Random symmetric positive definite matrix with eigenvalues in [lo, hi].
inline SymMatrix random_spd(Index n, double lo, double hi, std::mt19937_64& gen) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(lo, hi);
  Matrix g(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) g(i, j) = normal(gen);
  const Eigen::HouseholderQR<Matrix> qr(g);
  const Matrix q = qr.householderQ();
  Vector eig(n);
  for (Index i = 0; i < n; ++i) eig(i) = unif(gen);
  return SymMatrix::symmetrize(q * eig.asDiagonal() * q.transpose());
}

}  // namespace oracle
