#include "iqcmpc/sdp.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>

namespace iqcmpc {

AffineSym SymVar::expr() const {
  AffineSym out(dim);
  Index v = offset;
  for (Index i = 0; i < dim; ++i)
    for (Index j = i; j < dim; ++j) {
      Matrix e = Matrix::Zero(dim, dim);
      e(i, j) = 1.0;
      e(j, i) = 1.0;
      out += AffineSym::term(dim, v++, e);
    }
  return out;
}

SymMatrix SdpSolution::value(const SymVar& v) const {
  Matrix m(v.dim, v.dim);
  Index k = v.offset;
  for (Index i = 0; i < v.dim; ++i)
    for (Index j = i; j < v.dim; ++j) {
      m(i, j) = x(k);
      m(j, i) = x(k);
      ++k;
    }
  return SymMatrix::symmetrize(m);
}

ScalarVar SdpProblem::add_scalar(std::optional<double> lower, std::optional<double> upper) {
  ScalarVar v{nvars_++};
  if (lower) add_lmi(v.expr() - AffineSym::constant(Matrix::Constant(1, 1, *lower)), LmiSense::PosDef);
  if (upper) add_lmi(AffineSym::constant(Matrix::Constant(1, 1, *upper)) - v.expr(), LmiSense::PosDef);
  return v;
}

SymVar SdpProblem::add_symmetric(Index dim) {
  require(dim > 0, ErrorCode::InvalidArgument, "add_symmetric: dimension must be positive");
  SymVar v{nvars_, dim};
  nvars_ += dim * (dim + 1) / 2;
  return v;
}

void SdpProblem::add_lmi(AffineSym expr, LmiSense sense, double margin, std::string name) {
  require(expr.dim() > 0, ErrorCode::DimensionMismatch, "add_lmi: empty matrix inequality");
  require(margin >= 0.0, ErrorCode::InvalidArgument, "add_lmi: margin must be nonnegative");
  for (const auto& [var, coeff] : expr.terms())
    require(var >= 0 && var < nvars_, ErrorCode::DimensionMismatch, "add_lmi: expression uses an undeclared variable");
  cons_.push_back({std::move(expr), sense, margin, std::move(name)});
}

void SdpProblem::minimize(const AffineSym& scalar) {
  require(scalar.dim() == 1, ErrorCode::DimensionMismatch, "minimize: objective must be 1x1");
  cost_ = Vector::Zero(nvars_);
  for (const auto& [var, coeff] : scalar.terms()) {
    require(var < nvars_, ErrorCode::DimensionMismatch, "minimize: objective uses an undeclared variable");
    cost_(var) += coeff(0, 0);
  }
}

namespace {

// Constraint blocks in the normalized form G(x) = sense * F(x) - margin I > 0,
// with an optional common slack s entering as + s I (phase I).
struct Block {
  Matrix g0;
  std::vector<std::pair<Index, Matrix>> terms;
};

std::vector<Block> normalize(const SdpProblem& prob) {
  std::vector<Block> blocks;
  blocks.reserve(prob.constraints().size());
  for (const auto& c : prob.constraints()) {
    const double sign = c.sense == LmiSense::PosDef ? 1.0 : -1.0;
    const Index n = c.expr.dim();
    Block b;
    b.g0 = sign * c.expr.constant_part() - c.margin * Matrix::Identity(n, n);
    for (const auto& [var, coeff] : c.expr.terms()) b.terms.emplace_back(var, sign * coeff);
    blocks.push_back(std::move(b));
  }
  return blocks;
}

class Barrier {
 public:
  Barrier(const std::vector<Block>& blocks, Index nvars, bool with_slack, double radius)
      : blocks_(blocks), n_(nvars), slack_(with_slack), r2_(radius * radius) {
    for (const auto& b : blocks_) order_ += static_cast<double>(b.g0.rows());
    order_ += slack_ ? 2.0 : 1.0;
  }

  Index dim() const { return n_ + (slack_ ? 1 : 0); }
  double order() const { return order_; }

  Matrix value(const Block& b, const Vector& z) const {
    Matrix g = b.g0;
    for (const auto& [var, coeff] : b.terms) g += z(var) * coeff;
    if (slack_) g.diagonal().array() += z(n_);
    return g;
  }

  /// -sum log det G_j(z), or +inf outside the domain.
  double potential(const Vector& z) const {
    const double room = r2_ - z.head(n_).squaredNorm();
    if (room <= 0.0) return std::numeric_limits<double>::infinity();
    double phi = -std::log(room);
    // Phase I keeps the slack above -1 so the auxiliary problem stays bounded.
    if (slack_) {
      if (z(n_) <= -1.0) return std::numeric_limits<double>::infinity();
      phi -= std::log(z(n_) + 1.0);
    }
    for (const auto& b : blocks_) {
      Eigen::LLT<Matrix> llt(value(b, z));
      if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
      const Vector d = llt.matrixL().toDenseMatrix().diagonal();
      if ((d.array() <= 0.0).any()) return std::numeric_limits<double>::infinity();
      phi -= 2.0 * d.array().log().sum();
    }
    return phi;
  }

  /// Gradient and Hessian of the potential. Returns false outside the domain.
  bool derivatives(const Vector& z, Vector& grad, Matrix& hess) const {
    const Index m = dim();
    grad = Vector::Zero(m);
    hess = Matrix::Zero(m, m);
    const double room = r2_ - z.head(n_).squaredNorm();
    if (room <= 0.0) return false;
    grad.head(n_) += 2.0 * z.head(n_) / room;
    hess.topLeftCorner(n_, n_) += 2.0 / room * Matrix::Identity(n_, n_) +
                                  4.0 / (room * room) * z.head(n_) * z.head(n_).transpose();
    if (slack_) {
      const double lift = 1.0 / (z(n_) + 1.0);
      grad(n_) -= lift;
      hess(n_, n_) += lift * lift;
    }
    for (const auto& b : blocks_) {
      const Index k = b.g0.rows();
      Eigen::LLT<Matrix> llt(value(b, z));
      if (llt.info() != Eigen::Success) return false;
      std::vector<Index> vars;
      std::vector<Matrix> w;
      for (const auto& [var, coeff] : b.terms) {
        Matrix t = llt.matrixL().solve(coeff);
        w.push_back(llt.matrixL().solve(t.transpose()).transpose());
        vars.push_back(var);
      }
      if (slack_) {
        Matrix t = llt.matrixL().solve(Matrix::Identity(k, k));
        w.push_back(llt.matrixL().solve(t.transpose()).transpose());
        vars.push_back(n_);
      }
      for (std::size_t i = 0; i < w.size(); ++i) {
        grad(vars[i]) -= w[i].trace();
        for (std::size_t j = 0; j <= i; ++j) {
          const double h = (w[i].array() * w[j].array()).sum();
          hess(vars[i], vars[j]) += h;
          if (i != j) hess(vars[j], vars[i]) += h;
        }
      }
    }
    return true;
  }

 private:
  const std::vector<Block>& blocks_;
  Index n_;
  bool slack_;
  double r2_;
  double order_ = 0.0;
};

enum class CenterResult { Converged, EarlyExit, Budget, Stalled };

// Damped Newton centering of t c'z + phi(z). `stop` lets phase I leave as soon
// as the slack turns negative.
template <class Stop>
CenterResult center(const Barrier& bar, const Vector& cost, double t, Vector& z, int& steps, int max_steps,
                    Stop&& stop) {
  Vector grad;
  Matrix hess;
  for (;;) {
    if (stop(z)) return CenterResult::EarlyExit;
    if (steps >= max_steps) return CenterResult::Budget;
    if (!bar.derivatives(z, grad, hess)) fail(ErrorCode::NumericalFailure, "solve_sdp: iterate left the cone");
    grad += t * cost;
    const double reg = 1e-14 * std::max(1.0, hess.diagonal().cwiseAbs().maxCoeff());
    hess.diagonal().array() += reg;
    Eigen::LDLT<Matrix> ldlt(hess);
    if (ldlt.info() != Eigen::Success) fail(ErrorCode::NumericalFailure, "solve_sdp: singular Newton system");
    const Vector dz = ldlt.solve(-grad);
    if (!dz.allFinite()) fail(ErrorCode::NumericalFailure, "solve_sdp: non-finite Newton step");
    const double decrement = -grad.dot(dz);
    ++steps;
    if (decrement <= 1e-9) return CenterResult::Converged;

    // Linear and barrier parts are differenced separately; t c'z is large late on the path.
    const double phi0 = bar.potential(z);
    const double slope = t * cost.dot(dz);
    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls, alpha *= 0.5) {
      const Vector trial = z + alpha * dz;
      const double change = alpha * slope + (bar.potential(trial) - phi0);
      if (std::isfinite(change) && change <= -0.25 * alpha * decrement) {
        accepted = (trial - z).lpNorm<Eigen::Infinity>() > 1e-15 * (1.0 + z.lpNorm<Eigen::Infinity>());
        z = trial;
        break;
      }
    }
    if (!accepted) return CenterResult::Stalled;
  }
}

double achieved_margin(const SdpProblem& prob, const Vector& x) {
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& c : prob.constraints()) {
    SymMatrix f = c.expr.evaluate(x);
    const double lam = c.sense == LmiSense::PosDef ? lambda_min(f) : -lambda_max(f);
    worst = std::min(worst, lam - c.margin);
  }
  return worst;
}

}  // namespace

SdpSolution solve_sdp(const SdpProblem& prob, const SdpOptions& opts) {
  require(!prob.constraints().empty(), ErrorCode::InvalidArgument, "solve_sdp: no constraints");
  const Index n = prob.num_vars();
  Vector cost = prob.objective().size() == n ? prob.objective() : Vector::Zero(n);
  const auto blocks = normalize(prob);
  int steps = 0;

  // Phase I from x = 0.
  Vector z = Vector::Zero(n + 1);
  {
    double worst = 0.0;
    for (const auto& b : blocks) worst = std::min(worst, lambda_min(SymMatrix::symmetrize(b.g0)));
    z(n) = 1.0 - worst;
  }
  Barrier phase1(blocks, n, true, opts.radius);
  Vector slack_cost = Vector::Zero(n + 1);
  slack_cost(n) = 1.0;
  const auto feasible = [n](const Vector& v) { return v(n) < 0.0; };
  bool found = feasible(z);
  for (double t = 1.0; !found;) {
    const CenterResult r = center(phase1, slack_cost, t, z, steps, opts.max_newton, feasible);
    if (r == CenterResult::EarlyExit) {
      found = true;
      break;
    }
    if (r == CenterResult::Budget) fail(ErrorCode::MaxIterations, "solve_sdp: Newton budget exhausted in phase I");
    // On the central path z(n) - order / t bounds the optimal slack from below.
    if (r == CenterResult::Converged && z(n) - phase1.order() / t > 0.0)
      fail(ErrorCode::Infeasible, "solve_sdp: no strictly feasible point");
    if (phase1.order() / t < opts.gap_tol * std::max(1.0, std::abs(z(n))) || r == CenterResult::Stalled)
      fail(ErrorCode::Infeasible, "solve_sdp: no strictly feasible point");
    t *= opts.path_factor;
  }

  Vector x = z.head(n);
  Barrier phase2(blocks, n, false, opts.radius);
  if (!cost.isZero()) {
    const auto never = [](const Vector&) { return false; };
    double t = phase2.order() / std::max(1.0, std::abs(cost.dot(x)));
    for (;;) {
      const CenterResult r = center(phase2, cost, t, x, steps, opts.max_newton, never);
      if (r == CenterResult::Budget) fail(ErrorCode::MaxIterations, "solve_sdp: Newton budget exhausted in phase II");
      if (phase2.order() / t < opts.gap_tol * std::max(1.0, std::abs(cost.dot(x)))) break;
      if (r == CenterResult::Stalled && phase2.order() / t < 1e-6 * std::max(1.0, std::abs(cost.dot(x)))) break;
      t *= opts.path_factor;
    }
  }

  SdpSolution sol;
  sol.x = x;
  sol.objective = cost.dot(x);
  sol.margin = achieved_margin(prob, x);
  sol.newton_steps = steps;
  if (sol.margin < 0.0) fail(ErrorCode::NumericalFailure, "solve_sdp: returned point violates a constraint margin");
  return sol;
}

}  // namespace iqcmpc
