#include "iqcmpc/conic.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>

namespace iqcmpc {

ConicProblem::ConicProblem(Index nvars)
    : hess(Matrix::Zero(nvars, nvars)), lin(Vector::Zero(nvars)), g(0, nvars), h(0) {}

void ConicProblem::add_row(const Vector& row, double bound) {
  require(row.size() == num_vars(), ErrorCode::DimensionMismatch, "add_row: row has wrong length");
  g.conservativeResize(g.rows() + 1, num_vars());
  g.row(g.rows() - 1) = row.transpose();
  h.conservativeResize(h.size() + 1);
  h(h.size() - 1) = bound;
}

void ConicProblem::add_cone(SocConstraint cone) {
  require(cone.a.cols() == num_vars() && cone.c.size() == num_vars() && cone.b.size() == cone.a.rows(),
          ErrorCode::DimensionMismatch, "add_cone: cone data has wrong shape");
  cones.push_back(std::move(cone));
}

double ConicProblem::max_violation(const Vector& x) const {
  double worst = -std::numeric_limits<double>::infinity();
  if (g.rows() > 0) worst = (g * x - h).maxCoeff();
  for (const auto& cone : cones) worst = std::max(worst, (cone.a * x + cone.b).norm() - cone.c.dot(x) - cone.d);
  return worst;
}

namespace {

// Log barrier over z = [x] or z = [x; s], where the phase-I slack s relaxes
// every row and cone by the same amount. Without the slack a fixed relaxation
// takes its place.
class Barrier {
 public:
  Barrier(const ConicProblem& prob, bool with_slack, double radius, double relax = 0.0)
      : prob_(prob), n_(prob.num_vars()), slack_(with_slack), r2_(radius * radius), relax_(relax) {
    order_ = static_cast<double>(prob.g.rows()) + 2.0 * static_cast<double>(prob.cones.size()) + 1.0 +
             (slack_ ? 1.0 : 0.0);
  }

  Index dim() const { return n_ + (slack_ ? 1 : 0); }
  double order() const { return order_; }

  double potential(const Vector& z) const {
    constexpr double inf = std::numeric_limits<double>::infinity();
    const auto x = z.head(n_);
    const double s = slack_ ? z(n_) : relax_;
    const double room = r2_ - x.squaredNorm();
    if (room <= 0.0) return inf;
    double phi = -std::log(room);
    if (slack_) {
      if (s <= -1.0) return inf;
      phi -= std::log(s + 1.0);
    }
    if (prob_.g.rows() > 0) {
      const Vector r = prob_.h - prob_.g * x + Vector::Constant(prob_.h.size(), s);
      if ((r.array() <= 0.0).any()) return inf;
      phi -= r.array().log().sum();
    }
    for (const auto& cone : prob_.cones) {
      const double top = cone.c.dot(x) + cone.d + s;
      const double gap = top * top - (cone.a * x + cone.b).squaredNorm();
      if (top <= 0.0 || gap <= 0.0) return inf;
      phi -= std::log(gap);
    }
    return phi;
  }

  bool derivatives(const Vector& z, Vector& grad, Matrix& hess) const {
    const Index m = dim();
    grad = Vector::Zero(m);
    hess = Matrix::Zero(m, m);
    const Vector x = z.head(n_);
    const double s = slack_ ? z(n_) : relax_;
    const double room = r2_ - x.squaredNorm();
    if (room <= 0.0) return false;
    grad.head(n_) += 2.0 * x / room;
    hess.topLeftCorner(n_, n_) +=
        2.0 / room * Matrix::Identity(n_, n_) + 4.0 / (room * room) * x * x.transpose();
    if (slack_) {
      const double lift = 1.0 / (s + 1.0);
      grad(n_) -= lift;
      hess(n_, n_) += lift * lift;
    }
    for (Index j = 0; j < prob_.g.rows(); ++j) {
      const double r = prob_.h(j) - prob_.g.row(j).dot(x) + s;
      if (r <= 0.0) return false;
      Vector beta = Vector::Zero(m);
      beta.head(n_) = -prob_.g.row(j).transpose();
      if (slack_) beta(n_) = 1.0;
      grad -= beta / r;
      hess.noalias() += beta * beta.transpose() / (r * r);
    }
    for (const auto& cone : prob_.cones) {
      const Vector u = cone.a * x + cone.b;
      const double top = cone.c.dot(x) + cone.d + s;
      const double gap = top * top - u.squaredNorm();
      if (top <= 0.0 || gap <= 0.0) return false;
      Vector top_dir = Vector::Zero(m);
      top_dir.head(n_) = cone.c;
      if (slack_) top_dir(n_) = 1.0;
      Matrix a_full = Matrix::Zero(cone.a.rows(), m);
      a_full.leftCols(n_) = cone.a;
      const Vector dgap = 2.0 * top * top_dir - 2.0 * a_full.transpose() * u;
      grad -= dgap / gap;
      hess.noalias() += dgap * dgap.transpose() / (gap * gap);
      hess.noalias() -= (2.0 * top_dir * top_dir.transpose() - 2.0 * a_full.transpose() * a_full) / gap;
    }
    return true;
  }

 private:
  const ConicProblem& prob_;
  Index n_;
  bool slack_;
  double r2_;
  double relax_;
  double order_ = 0.0;
};

// Quadratic objective over z; the phase-I objective is the slack alone.
struct Objective {
  Matrix hess;
  Vector lin;

  double value(const Vector& z) const { return 0.5 * z.dot(hess * z) + lin.dot(z); }
};

enum class CenterResult { Converged, EarlyExit, Budget, Stalled };

template <class Stop>
CenterResult center(const Barrier& bar, const Objective& obj, double t, Vector& z, int& steps, int max_steps,
                    Stop&& stop) {
  Vector grad;
  Matrix hess;
  for (;;) {
    if (stop(z)) return CenterResult::EarlyExit;
    if (steps >= max_steps) return CenterResult::Budget;
    if (!bar.derivatives(z, grad, hess)) fail(ErrorCode::NumericalFailure, "solve_conic: iterate left the domain");
    grad += t * (obj.hess * z + obj.lin);
    hess += t * obj.hess;
    // Jacobi scaling: near a face the barrier curvature spans many decades.
    const Vector scale = hess.diagonal().cwiseAbs().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
    Matrix scaled = scale.asDiagonal() * hess * scale.asDiagonal();
    scaled.diagonal().array() += 1e-13;
    Eigen::LDLT<Matrix> ldlt(scaled);
    if (ldlt.info() != Eigen::Success) fail(ErrorCode::NumericalFailure, "solve_conic: singular Newton system");
    const Vector dz = scale.asDiagonal() * ldlt.solve(-(scale.asDiagonal() * grad));
    if (!dz.allFinite()) fail(ErrorCode::NumericalFailure, "solve_conic: non-finite Newton step");
    const double decrement = -grad.dot(dz);
    ++steps;
    if (decrement <= 1e-7) return CenterResult::Converged;

    // Close to the centre the full step is taken without a line search: the
    // potential difference there is below its own rounding error.
    const double lambda = std::sqrt(decrement);
    double alpha = 1.0;
    if (lambda >= 0.25) {
      const double phi0 = bar.potential(z);
      const double slope = t * (obj.hess * z + obj.lin).dot(dz);
      const double curve = 0.5 * t * dz.dot(obj.hess * dz);
      bool armijo = false;
      for (int ls = 0; ls < 30; ++ls, alpha *= 0.5) {
        const double change = alpha * slope + alpha * alpha * curve + (bar.potential(z + alpha * dz) - phi0);
        if (std::isfinite(change) && change <= -0.25 * alpha * decrement) {
          armijo = true;
          break;
        }
      }
      // Damped step of a self-concordant function: stays in the domain and decreases it.
      if (!armijo) alpha = 1.0 / (1.0 + lambda);
    }
    while (alpha > 1e-18 && !std::isfinite(bar.potential(z + alpha * dz))) alpha *= 0.5;
    const Vector trial = z + alpha * dz;
    const bool accepted = (trial - z).lpNorm<Eigen::Infinity>() > 1e-15 * (1.0 + z.lpNorm<Eigen::Infinity>());
    z = trial;
    if (!accepted) return CenterResult::Stalled;
  }
}

}  // namespace

ConicSolution solve_conic(const ConicProblem& prob, const std::optional<Vector>& start, const ConicOptions& opts) {
  const Index n = prob.num_vars();
  require(prob.hess.rows() == n && prob.hess.cols() == n, ErrorCode::DimensionMismatch,
          "solve_conic: objective curvature has wrong shape");
  require(prob.g.cols() == n && prob.g.rows() == prob.h.size(), ErrorCode::DimensionMismatch,
          "solve_conic: linear rows have wrong shape");
  Vector x = start ? *start : Vector::Zero(n);
  require(x.size() == n, ErrorCode::DimensionMismatch, "solve_conic: start point has wrong length");
  if (x.norm() >= 0.5 * opts.radius) x.setZero();
  int steps = 0;

  const double violation = prob.max_violation(x);
  double relax = 0.0;
  if (!(violation < 0.0)) {
    Vector z(n + 1);
    z << x, std::max(violation, 0.0) + 1.0;
    Barrier phase1(prob, true, opts.radius);
    Objective slack{Matrix::Zero(n + 1, n + 1), Vector::Zero(n + 1)};
    slack.lin(n) = 1.0;
    const auto feasible = [n](const Vector& v) { return v(n) < 0.0; };
    for (double t = 1.0;;) {
      const CenterResult r = center(phase1, slack, t, z, steps, opts.max_newton, feasible);
      if (r == CenterResult::EarlyExit) break;
      if (r == CenterResult::Budget) fail(ErrorCode::MaxIterations, "solve_conic: Newton budget exhausted in phase I");
      // Feasible sets without interior are accepted up to the relaxation tolerance.
      if (z(n) < opts.feas_tol) {
        relax = opts.feas_tol;
        break;
      }
      // On the central path z(n) - order / t bounds the optimal slack from below.
      if (r == CenterResult::Converged && z(n) - phase1.order() / t > 0.0)
        fail(ErrorCode::Infeasible, "solve_conic: no strictly feasible point");
      if (phase1.order() / t < 1e-12 || r == CenterResult::Stalled)
        fail(ErrorCode::Infeasible, "solve_conic: no strictly feasible point");
      t *= opts.path_factor;
    }
    x = z.head(n);
  }

  Barrier phase2(prob, false, opts.radius, relax);
  const Objective obj{prob.hess, prob.lin};
  const auto never = [](const Vector&) { return false; };
  double t = phase2.order() / std::max(1.0, std::abs(obj.value(x)));
  for (;;) {
    const CenterResult r = center(phase2, obj, t, x, steps, opts.max_newton, never);
    if (r == CenterResult::Budget) fail(ErrorCode::MaxIterations, "solve_conic: Newton budget exhausted in phase II");
    const double scale = std::max(1.0, std::abs(obj.value(x)));
    if (phase2.order() / t < opts.gap_tol * scale) break;
    if (r == CenterResult::Stalled && phase2.order() / t < 1e-6 * scale) break;
    t *= opts.path_factor;
  }
  return {x, obj.value(x), steps, relax};
}

}  // namespace iqcmpc
