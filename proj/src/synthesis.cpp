#include "iqcmpc/synthesis.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "iqcmpc/tube.hpp"

namespace iqcmpc {

DesignChannels design_channels(const LinearSystem& sys, const IQCFilter& filt) {
  const Index nx = sys.nx(), np = filt.npsi(), nd = sys.nd(), ny = sys.ny();
  DesignChannels ch;
  ch.b_ext = Matrix::Zero(nx + np, nd + ny);
  ch.b_ext.topLeftCorner(nx, nd) = sys.b_d;
  ch.b_ext.bottomLeftCorner(np, nd) = filt.b_psi1 * sys.d_d;
  ch.b_ext.bottomRightCorner(np, ny) = filt.b_psi1;
  ch.d_ext = Matrix(filt.nz(), nd + ny);
  ch.d_ext.leftCols(nd) = filt.d_psi1 * sys.d_d;
  ch.d_ext.rightCols(ny) = filt.d_psi1;
  return ch;
}

AffineSym stability_lmi(const AugmentedRealization& aug, const AffineSym& p, const AffineSym& m, double rho) {
  require(rho > 0.0 && rho <= 1.0, ErrorCode::InvalidArgument, "stability_lmi: rho must lie in (0, 1]");
  const Index n = aug.a.rows(), nw = aug.b.cols();
  require(p.dim() == n && m.dim() == aug.c.rows(), ErrorCode::DimensionMismatch, "stability_lmi: dimension mismatch");
  Matrix first = Matrix::Zero(n, n + nw);
  first.leftCols(n).setIdentity();
  Matrix next(n, n + nw);
  next << aug.a, aug.b;
  Matrix out(aug.c.rows(), n + nw);
  out << aug.c, aug.d;
  return -(rho * rho) * p.congruence(first) + p.congruence(next) + m.congruence(out);
}

AffineSym disturbance_weight(const AffineSym& gamma, const SymMatrix& xi, const AffineSym& gamma_mat) {
  require(gamma.dim() == 1, ErrorCode::DimensionMismatch, "disturbance_weight: gamma must be scalar");
  return AffineSym::block_diag({gamma.kron_left(xi.mat()), gamma_mat});
}

AffineSym design_lmi(const AugmentedRealization& aug, const DesignChannels& ch, const AffineSym& p,
                     const AffineSym& m, const AffineSym& weight, double rho) {
  require(rho > 0.0 && rho <= 1.0, ErrorCode::InvalidArgument, "design_lmi: rho must lie in (0, 1]");
  const Index n = aug.a.rows(), nw = aug.b.cols(), ne = ch.b_ext.cols();
  require(p.dim() == n && m.dim() == aug.c.rows() && weight.dim() == ne && ch.b_ext.rows() == n &&
              ch.d_ext.rows() == aug.c.rows(),
          ErrorCode::DimensionMismatch, "design_lmi: dimension mismatch");
  const Index cols = n + nw + ne;
  Matrix first = Matrix::Zero(n, cols);
  first.leftCols(n).setIdentity();
  Matrix next(n, cols);
  next << aug.a, aug.b, ch.b_ext;
  Matrix out(aug.c.rows(), cols);
  out << aug.c, aug.d, ch.d_ext;
  Matrix ext = Matrix::Zero(ne, cols);
  ext.rightCols(ne).setIdentity();
  return -(rho * rho) * p.congruence(first) + p.congruence(next) + m.congruence(out) - weight.congruence(ext);
}

SymMatrix design_lmi_value(const LinearSystem& sys, const Matrix& k, const IQCFilter& filt, const SymMatrix& p,
                           const SymMatrix& m, double gamma, const SymMatrix& gamma_mat, const SymMatrix& xi,
                           double rho) {
  const auto aug = assemble_augmented(sys, k, filt);
  const auto weight =
      disturbance_weight(AffineSym::constant(Matrix::Constant(1, 1, gamma)), xi, AffineSym::constant(gamma_mat));
  return design_lmi(aug, design_channels(sys, filt), AffineSym::constant(p), AffineSym::constant(m), weight, rho)
      .evaluate(Vector());
}

void DesignInputs::validate() const {
  sys.validate();
  dist.validate();
  filter.validate();
  cons.validate(sys.nx(), sys.nu());
  require(rho > 0.0 && rho <= 1.0, ErrorCode::InvalidArgument, "rho must lie in (0, 1]");
  require(k.rows() == sys.nu() && k.cols() == sys.nx(), ErrorCode::DimensionMismatch, "K has wrong shape");
  require(dist.xi.dim() == sys.nd(), ErrorCode::DimensionMismatch, "Xi does not match the disturbance dimension");
  require(filter.ny() == sys.ny() && filter.nw() == sys.nw(), ErrorCode::DimensionMismatch,
          "filter does not match the plant's y and w");
  if (const auto* fixed = std::get_if<Multiplier>(&multiplier))
    require(fixed->m.dim() == filter.nz(), ErrorCode::DimensionMismatch, "multiplier does not match the filter output");
  if (const auto* delay = std::get_if<DelayIqc>(&multiplier))
    require(delay->filter.nz() == filter.nz() && delay->filter.npsi() == filter.npsi(), ErrorCode::DimensionMismatch,
            "delay multiplier family does not match the filter");
}

double design_margin(double gamma, const SymMatrix& gamma_mat, const SymMatrix& xi) {
  double scale = 1.0;
  if (xi.dim() > 0) scale = std::max(scale, gamma * lambda_max(xi));
  if (gamma_mat.dim() > 0) scale = std::max(scale, lambda_max(gamma_mat));
  return 1e-6 * scale;
}

namespace {

// Adds the multiplier as a decision expression; X is returned for the delay family.
AffineSym add_multiplier(SdpProblem& prob, const MultiplierSpec& spec, std::optional<SymVar>& x_var) {
  if (const auto* fixed = std::get_if<Multiplier>(&spec)) return AffineSym::constant(fixed->m);
  const auto& delay = std::get<DelayIqc>(spec);
  const SymVar m = prob.add_symmetric(delay.filter.nz());
  const SymVar x = prob.add_symmetric(delay.ny);
  for (int tau = 0; tau <= delay.tau_max; ++tau) {
    const AffineSym bound = AffineSym::block_diag({x.expr().kron_left(delay.delay_pattern(tau)), -x.expr()});
    prob.add_lmi(m.expr() - bound, LmiSense::PosDef, 0.0, "multiplier-family");
  }
  prob.add_lmi(x.expr(), LmiSense::PosDef, 0.0, "x-nonnegative");
  x_var = x;
  return m.expr();
}

// Permutation taking [psi; e] to [e; psi].
Matrix swap_blocks(Index nx, Index np) {
  Matrix j = Matrix::Zero(nx + np, nx + np);
  j.block(0, np, nx, nx).setIdentity();
  j.block(nx, 0, np, np).setIdentity();
  return j;
}

}  // namespace

DesignResult minimize_tightening(const DesignInputs& in, double gamma, const SymMatrix& gamma_mat,
                                 const SdpOptions& opts) {
  in.validate();
  require(gamma > 0.0, ErrorCode::InvalidArgument, "gamma must be positive");
  require(gamma_mat.dim() == in.sys.ny(), ErrorCode::DimensionMismatch, "Gamma does not match the output dimension");
  require(lambda_min(gamma_mat) > 0.0, ErrorCode::InvalidArgument, "Gamma must be positive definite");

  const Index nx = in.sys.nx(), np = in.filter.npsi(), n = nx + np;
  const auto aug = assemble_augmented(in.sys, in.k, in.filter);
  const auto ch = design_channels(in.sys, in.filter);

  SdpProblem prob;
  const SymVar p = prob.add_symmetric(n);
  std::optional<SymVar> x_var;
  const AffineSym m = add_multiplier(prob, in.multiplier, x_var);
  const AffineSym weight = disturbance_weight(AffineSym::constant(Matrix::Constant(1, 1, gamma)), in.dist.xi,
                                              AffineSym::constant(gamma_mat));
  const double margin = design_margin(gamma, gamma_mat, in.dist.xi);
  prob.add_lmi(design_lmi(aug, ch, p.expr(), m, weight, in.rho), LmiSense::NegDef, margin, "design");
  prob.add_lmi(p.expr(), LmiSense::PosDef, 0.0, "p-positive");

  const AffineSym p_swapped = p.expr().congruence(swap_blocks(nx, np)).embed(n + 1, 0);
  const Index rows = in.cons.rows(), nu = in.sys.nu();
  std::vector<ScalarVar> bounds;
  AffineSym objective(1);
  for (Index i = 0; i < rows; ++i) {
    const Vector f = in.cons.h_mat.row(i).transpose();
    const Vector g = f.head(nx) + in.k.transpose() * f.tail(nu);
    Matrix fixed = Matrix::Zero(n + 1, n + 1);
    fixed.block(np, n, nx, 1) = g;
    fixed.block(n, np, 1, nx) = g.transpose();
    const ScalarVar b = prob.add_scalar();
    bounds.push_back(b);
    prob.add_lmi(p_swapped + AffineSym::constant(fixed) + b.expr().embed(n + 1, n), LmiSense::PosDef, 0.0,
                 "tightening-row");
    objective += b.expr();
  }
  prob.minimize(objective);

  const SdpSolution sol = solve_sdp(prob, opts);

  DesignResult res;
  const SymMatrix p_val = sol.value(p);
  const SchurSplit split = np > 0 ? schur_reduce(p_val, nx) : SchurSplit{p_val, SymMatrix::zero(nx)};
  res.m.m = m.evaluate(sol.x);
  if (x_var) res.x_weight = sol.value(*x_var);
  res.gamma_rows = Vector(rows);
  for (Index i = 0; i < rows; ++i) res.gamma_rows(i) = sol.value(bounds[static_cast<std::size_t>(i)]);
  res.objective = sol.objective;

  TubeParams& t = res.tube;
  t.rho = in.rho;
  t.p = p_val;
  t.p_e = split.p_e;
  t.p_diff = split.p_diff;
  t.gamma = gamma;
  t.gamma_mat = gamma_mat;
  t.k = in.k;
  t.c = tighten_vector(split.p_e, in.k, in.cons);
  t.d_max = in.dist.d_max;

  res.lmi_margin =
      -lambda_max(design_lmi_value(in.sys, in.k, in.filter, p_val, res.m.m, gamma, gamma_mat, in.dist.xi, in.rho));
  return res;
}

double propose_gamma(const DesignInputs& in, const SdpOptions& opts) {
  in.validate();
  const Index nx = in.sys.nx(), np = in.filter.npsi(), n = nx + np, ny = in.sys.ny();
  const auto aug = assemble_augmented(in.sys, in.k, in.filter);
  const auto ch = design_channels(in.sys, in.filter);

  SdpProblem prob;
  const SymVar p = prob.add_symmetric(n);
  std::optional<SymVar> x_var;
  const AffineSym m = add_multiplier(prob, in.multiplier, x_var);
  const ScalarVar g = prob.add_scalar(0.0);
  const AffineSym weight = disturbance_weight(g.expr(), in.dist.xi, g.expr().kron_left(Matrix::Identity(ny, ny)));
  prob.add_lmi(design_lmi(aug, ch, p.expr(), m, weight, in.rho), LmiSense::NegDef, 1e-6, "design");
  Matrix lead = Matrix::Zero(n, nx);
  lead.topRows(nx).setIdentity();
  prob.add_lmi(p.expr().congruence(lead) - AffineSym::constant(SymMatrix::identity(nx)), LmiSense::PosDef, 0.0,
               "normalization");
  prob.minimize(g.expr());
  return solve_sdp(prob, opts).value(g);
}

bool check_terminal_existence(const ConstraintSet& cons, const TubeParams& tube) {
  require(tube.c.size() == cons.rows(), ErrorCode::DimensionMismatch, "tightening does not match the constraint rows");
  require(tube.rho < 1.0, ErrorCode::InvalidArgument, "terminal set needs rho < 1");
  const double bound = std::sqrt(tube.gamma) * tube.d_max / std::sqrt(1.0 - tube.rho * tube.rho);
  return ((cons.h_vec - bound * tube.c).array() > 0.0).all();
}

double terminal_output_gain(const LinearSystem& sys, const TubeParams& tube, const TerminalSet& term) {
  const Matrix c_k = sys.c + sys.d_u * term.k_omega;
  const SymMatrix n = SymMatrix::symmetrize(c_k.transpose() * tube.gamma_mat.mat() * c_k);
  return std::max(0.0, max_generalized_eig(n, term.s_mat));
}

namespace {

// a_i = |S^{-1/2} [I; K]' F_i'|, the largest F_i [z; K z] over |z|_S <= 1.
Vector terminal_row_gains(const ConstraintSet& cons, const SymMatrix& s, const Matrix& k) {
  const Index nx = s.dim(), nu = k.rows();
  Eigen::LDLT<Matrix> ldlt(s.mat());
  Vector a(cons.rows());
  for (Index i = 0; i < cons.rows(); ++i) {
    const Vector f = cons.h_mat.row(i).transpose();
    const Vector h = f.head(nx) + k.transpose() * f.tail(nu);
    a(i) = std::sqrt(std::max(0.0, h.dot(ldlt.solve(h))));
  }
  return a;
}

}  // namespace

TerminalSet terminal_ingredients(const LinearSystem& sys, const TubeParams& tube, const ConstraintSet& cons,
                                 const SymMatrix& q, const SymMatrix& r, const Matrix& k_omega,
                                 std::optional<double> s_omega_override) {
  sys.validate();
  cons.validate(sys.nx(), sys.nu());
  require(k_omega.rows() == sys.nu() && k_omega.cols() == sys.nx(), ErrorCode::DimensionMismatch,
          "terminal gain has wrong shape");
  const Matrix a_cl = sys.a + sys.b_u * k_omega;
  if (spectral_radius(a_cl) >= 1.0) fail(ErrorCode::NotSchurStable, "terminal gain does not stabilize the plant");
  if (!check_terminal_existence(cons, tube))
    fail(ErrorCode::NoTerminalSet, "disturbance tube alone exceeds the constraints");

  TerminalSet term;
  term.k_omega = k_omega;
  term.s_mat =
      solve_discrete_lyapunov(a_cl, SymMatrix::symmetrize(q.mat() + k_omega.transpose() * r.mat() * k_omega));
  const double lam = terminal_output_gain(sys, tube, term);
  const Vector a = terminal_row_gains(cons, term.s_mat, k_omega);
  const double decay = 1.0 - tube.rho * tube.rho;
  const double floor = tube.disturbance_gain() / decay;
  const auto s_of = [&](double x) { return (x * lam + tube.disturbance_gain()) / decay; };
  const auto worst = [&](double x, double s) {
    return (std::sqrt(x) * a + std::sqrt(s) * tube.c - cons.h_vec).maxCoeff();
  };

  if (s_omega_override) {
    const double s = *s_omega_override;
    if (s < floor) fail(ErrorCode::NoTerminalSet, "s_omega is below the disturbance floor of the tube");
    double x = lam > 0.0 ? (decay * s - tube.disturbance_gain()) / lam : std::numeric_limits<double>::infinity();
    for (Index i = 0; i < cons.rows(); ++i) {
      const double room = cons.h_vec(i) - std::sqrt(s) * tube.c(i);
      if (room < 0.0) fail(ErrorCode::NoTerminalSet, "s_omega leaves no room in the tightened constraints");
      if (a(i) > 0.0) x = std::min(x, (room / a(i)) * (room / a(i)));
    }
    if (!(x > 0.0) || !std::isfinite(x)) fail(ErrorCode::NoTerminalSet, "no positive terminal level for this s_omega");
    term.x_omega = x;
    term.s_omega = s;
    return term;
  }

  double hi = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < cons.rows(); ++i)
    if (a(i) > 0.0) {
      const double room = (cons.h_vec(i) - std::sqrt(floor) * tube.c(i)) / a(i);
      hi = std::min(hi, room * room);
    }
  if (!std::isfinite(hi)) {
    hi = 1.0;
    while (worst(hi, s_of(hi)) <= 0.0 && hi < 1e12) hi *= 2.0;
  }
  double lo = 0.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (worst(mid, s_of(mid)) <= 0.0 ? lo : hi) = mid;
  }
  if (!(lo > 0.0)) fail(ErrorCode::NoTerminalSet, "terminal level bisection collapsed to zero");
  term.x_omega = lo;
  term.s_omega = s_of(lo);
  return term;
}

TerminalCheck check_terminal_set(const LinearSystem& sys, const TubeParams& tube, const ConstraintSet& cons,
                                 const TerminalSet& term, const SymMatrix& q, const SymMatrix& r,
                                 std::size_t samples, std::uint64_t seed) {
  const Index nx = sys.nx();
  const Matrix a_cl = sys.a + sys.b_u * term.k_omega;
  const Matrix c_k = sys.c + sys.d_u * term.k_omega;
  const SymMatrix s_half_inv = inv_sqrt(term.s_mat);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  TerminalCheck out;
  out.samples = samples;
  out.worst_item1 = out.worst_item2 = out.worst_item3 = -std::numeric_limits<double>::infinity();
  const double tol1 = 1e-12 * std::max(1.0, term.s_omega);
  for (std::size_t n = 0; n < samples; ++n) {
    Vector dir(nx);
    for (Index i = 0; i < nx; ++i) dir(i) = normal(rng);
    dir.normalize();
    const double radius = std::sqrt(term.x_omega) * std::pow(unit(rng), 1.0 / static_cast<double>(nx));
    const Vector z = s_half_inv.mat() * (radius * dir);
    const double s = term.s_omega * unit(rng);
    const Vector v = term.k_omega * z;

    const Vector z_next = a_cl * z;
    const Vector y = c_k * z;
    const double s_next = tube_predict(s, tube.gamma_mat.quad(y), tube);
    const double v1 = std::max(term.s_mat.quad(z_next) - term.x_omega, s_next - term.s_omega);
    out.worst_item1 = std::max(out.worst_item1, v1);
    if (v1 > tol1) ++out.item1_invariance;

    const double v2 = (cons.residual(z, v) + std::sqrt(s) * tube.c).maxCoeff();
    out.worst_item2 = std::max(out.worst_item2, v2);
    if (v2 > 1e-12) ++out.item2_constraints;

    const double v3 = term.s_mat.quad(z_next) - term.s_mat.quad(z) + q.quad(z) + r.quad(v);
    out.worst_item3 = std::max(out.worst_item3, v3);
    if (v3 > 1e-9 * term.s_mat.quad(z)) ++out.item3_decrease;
  }
  return out;
}

}  // namespace iqcmpc
