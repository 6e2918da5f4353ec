#include "iqcmpc/tube.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>

namespace iqcmpc {

Vector tighten_vector(const SymMatrix& p_e, const Matrix& k, const ConstraintSet& cons) {
  const Index nx = p_e.dim();
  cons.validate(nx, k.rows());
  require(k.cols() == nx, ErrorCode::DimensionMismatch, "tighten_vector: gain has wrong column count");
  if (lambda_min(p_e) <= 0.0) fail(ErrorCode::InvalidArgument, "tighten_vector: P_e is not positive definite");
  Eigen::LDLT<Matrix> ldlt(p_e.mat());
  Vector c(cons.rows());
  for (Index i = 0; i < cons.rows(); ++i) {
    const Vector row = cons.h_mat.row(i).transpose();
    const Vector g = row.head(nx) + k.transpose() * row.tail(k.rows());
    c(i) = std::sqrt(std::max(0.0, g.dot(ldlt.solve(g))));
  }
  return c;
}

double tube_predict(double s, double ybar_sq_gamma, const TubeParams& tube) {
  return tube.rho * tube.rho * s + tube.disturbance_gain() + ybar_sq_gamma;
}

double tube_measurement_update(double s1, const Vector& e1, const Vector& e0, const TubeParams& tube) {
  require(e1.size() == tube.nx() && e0.size() == tube.nx(), ErrorCode::DimensionMismatch,
          "tube_measurement_update: error has wrong dimension");
  double room = s1 - tube.p_e.quad(e1);
  if (room < 0.0) {
    if (room < -kContainmentDust) fail(ErrorCode::ContainmentBroken, "tube_measurement_update: s1 < |e1|^2_Pe");
    room = 0.0;
  }
  const Vector delta = e0 - e1;
  const double shift = std::sqrt(std::max(0.0, tube.p_diff.quad(delta)));
  return s1 + tube.p_e.quad(e0) - tube.p_e.quad(e1) + shift * shift + 2.0 * shift * std::sqrt(room);
}

double exact_update(double c1, const Vector& e1, const std::optional<Vector>& psi1, const Vector& e0,
                    const TubeParams& tube) {
  if (!psi1) fail(ErrorCode::UnsupportedMode, "exact_update: filter state is not available");
  require(psi1->size() == tube.npsi() && e1.size() == tube.nx() && e0.size() == tube.nx(),
          ErrorCode::DimensionMismatch, "exact_update: dimension mismatch");
  Vector j0(tube.p.dim()), j1(tube.p.dim());
  j0 << e0, *psi1;
  j1 << e1, *psi1;
  return c1 + tube.p.quad(j0) - tube.p.quad(j1);
}

ContainmentReport verify_containment(const std::vector<ContainmentSample>& samples, const TubeParams& tube,
                                     double tol) {
  ContainmentReport rep;
  rep.min_slack = std::numeric_limits<double>::infinity();
  for (const auto& smp : samples) {
    const double slack = smp.s - tube.p_e.quad(smp.error);
    rep.min_slack = std::min(rep.min_slack, slack);
    if (slack < -tol) rep.violations.push_back({smp.t, smp.k, slack});
  }
  rep.checked = samples.size();
  if (samples.empty()) rep.min_slack = 0.0;
  return rep;
}

}  // namespace iqcmpc
