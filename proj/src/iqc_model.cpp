#include "iqcmpc/iqc_model.hpp"

#include <sstream>

namespace iqcmpc {

namespace {

void expect_shape(const Matrix& m, Index rows, Index cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream os;
    os << name << " is " << m.rows() << "x" << m.cols() << ", expected " << rows << "x" << cols;
    fail(ErrorCode::DimensionMismatch, os.str());
  }
}

}  // namespace

void LinearSystem::validate() const {
  const Index n = a.rows();
  expect_shape(a, n, n, "A");
  expect_shape(b_w, n, b_w.cols(), "B_w");
  expect_shape(b_d, n, b_d.cols(), "B_d");
  expect_shape(b_u, n, b_u.cols(), "B_u");
  const Index m = c.rows();
  expect_shape(c, m, n, "C");
  expect_shape(d_w, m, nw(), "D_w");
  expect_shape(d_d, m, nd(), "D_d");
  expect_shape(d_u, m, nu(), "D_u");
}

void DisturbanceModel::validate() const {
  require(d_max >= 0.0, ErrorCode::InvalidArgument, "disturbance bound must be nonnegative");
  if (xi.dim() > 0)
    require(lambda_min(xi) > 0.0, ErrorCode::InvalidArgument, "disturbance shape Xi must be positive definite");
}

void IQCFilter::validate() const {
  const Index n = a_psi.rows();
  expect_shape(a_psi, n, n, "A_psi");
  expect_shape(b_psi1, n, b_psi1.cols(), "B_psi1");
  expect_shape(b_psi2, n, b_psi2.cols(), "B_psi2");
  const Index p = c_psi.rows();
  expect_shape(c_psi, p, n, "C_psi");
  expect_shape(d_psi1, p, ny(), "D_psi1");
  expect_shape(d_psi2, p, nw(), "D_psi2");
}

void ConstraintSet::validate(Index nx, Index nu) const {
  require(h_mat.rows() > 0, ErrorCode::InvalidArgument, "constraint set is empty");
  expect_shape(h_mat, h_mat.rows(), nx + nu, "F");
  require(h_vec.size() == h_mat.rows(), ErrorCode::DimensionMismatch, "f length does not match rows of F");
}

Vector ConstraintSet::residual(const Vector& x, const Vector& u) const {
  const Index nx = x.size();
  return h_mat.leftCols(nx) * x + h_mat.rightCols(u.size()) * u - h_vec;
}

AugmentedRealization assemble_augmented(const LinearSystem& sys, const Matrix& k, const IQCFilter& filt) {
  sys.validate();
  filt.validate();
  const Index nx = sys.nx();
  const Index np = filt.npsi();
  expect_shape(k, sys.nu(), nx, "K");
  require(filt.ny() == sys.ny() && filt.nw() == sys.nw(), ErrorCode::DimensionMismatch,
          "filter input dimensions do not match the plant's y and w");

  const Matrix a_k = sys.a + sys.b_u * k;
  const Matrix c_k = sys.c + sys.d_u * k;

  AugmentedRealization out;
  out.a = Matrix::Zero(nx + np, nx + np);
  out.a.topLeftCorner(nx, nx) = a_k;
  out.a.bottomLeftCorner(np, nx) = filt.b_psi1 * c_k;
  out.a.bottomRightCorner(np, np) = filt.a_psi;

  out.b = Matrix(nx + np, sys.nw());
  out.b.topRows(nx) = sys.b_w;
  out.b.bottomRows(np) = filt.b_psi1 * sys.d_w + filt.b_psi2;

  out.c = Matrix(filt.nz(), nx + np);
  out.c.leftCols(nx) = filt.d_psi1 * c_k;
  out.c.rightCols(np) = filt.c_psi;

  out.d = filt.d_psi1 * sys.d_w + filt.d_psi2;
  return out;
}

FilterStep filter_step(const IQCFilter& filt, const Vector& psi, const Vector& y, const Vector& w) {
  require(psi.size() == filt.npsi() && y.size() == filt.ny() && w.size() == filt.nw(),
          ErrorCode::DimensionMismatch, "filter_step: dimension mismatch");
  return {filt.a_psi * psi + filt.b_psi1 * y + filt.b_psi2 * w,
          filt.c_psi * psi + filt.d_psi1 * y + filt.d_psi2 * w};
}

Matrix DelayIqc::delay_pattern(int tau) const {
  require(tau >= 0 && tau <= tau_max, ErrorCode::InvalidArgument, "delay pattern: tau out of range");
  Matrix pat = Matrix::Zero(tau_max, tau_max);
  pat.bottomRightCorner(tau, tau).setOnes();
  return pat;
}

SymMatrix DelayIqc::lower_bound(int tau, const SymMatrix& x) const {
  require(x.dim() == ny, ErrorCode::DimensionMismatch, "delay multiplier: X has wrong dimension");
  const Matrix pat = delay_pattern(tau);
  const Index n = static_cast<Index>(tau_max) * ny;
  Matrix m = Matrix::Zero(n + ny, n + ny);
  for (int i = 0; i < tau_max; ++i)
    for (int j = 0; j < tau_max; ++j) m.block(i * ny, j * ny, ny, ny) = pat(i, j) * x.mat();
  m.bottomRightCorner(ny, ny) = -x.mat();
  return SymMatrix::symmetrize(m);
}

DelayIqc build_delay_iqc(int tau_max, Index ny) {
  require(tau_max >= 1 && ny >= 1, ErrorCode::InvalidArgument, "build_delay_iqc: need tau_max >= 1 and n_y >= 1");
  const Index n = static_cast<Index>(tau_max) * ny;
  const Matrix eye = Matrix::Identity(ny, ny);

  DelayIqc iqc;
  iqc.tau_max = tau_max;
  iqc.ny = ny;
  IQCFilter& f = iqc.filter;
  f.a_psi = Matrix::Zero(n, n);
  for (int i = 0; i + 1 < tau_max; ++i) f.a_psi.block(i * ny, (i + 1) * ny, ny, ny) = eye;
  f.b_psi1 = Matrix::Zero(n, ny);
  f.b_psi1.bottomRows(ny) = eye;
  f.b_psi2 = Matrix::Zero(n, ny);

  f.c_psi = Matrix::Zero(n + ny, n);
  for (int i = 0; i < tau_max; ++i) {
    f.c_psi.block(i * ny, i * ny, ny, ny) = eye;
    if (i + 1 < tau_max) f.c_psi.block(i * ny, (i + 1) * ny, ny, ny) = -eye;
  }
  f.d_psi1 = Matrix::Zero(n + ny, ny);
  f.d_psi1.block((tau_max - 1) * ny, 0, ny, ny) = -eye;
  f.d_psi2 = Matrix::Zero(n + ny, ny);
  f.d_psi2.bottomRows(ny) = eye;
  return iqc;
}

Vector delay_operator(std::span<const Vector> history, int tau_t, int tau_max) {
  require(!history.empty(), ErrorCode::InvalidArgument, "delay_operator: empty history");
  if (tau_t < 0 || tau_t > tau_max) fail(ErrorCode::InvalidArgument, "delay_operator: tau out of range");
  const Vector& now = history.back();
  const auto back = static_cast<std::ptrdiff_t>(history.size()) - 1 - tau_t;
  if (back < 0) return -now;
  return history[static_cast<std::size_t>(back)] - now;
}

DelayUncertainty DelayUncertainty::fixed(int tau_max, std::vector<int> schedule) {
  require(!schedule.empty(), ErrorCode::InvalidArgument, "delay schedule is empty");
  for (int tau : schedule)
    require(tau >= 0 && tau <= tau_max, ErrorCode::InvalidArgument, "delay schedule entry out of range");
  DelayUncertainty u;
  u.tau_max_ = tau_max;
  u.schedule_ = std::move(schedule);
  return u;
}

DelayUncertainty DelayUncertainty::constant(int tau_max, int tau) { return fixed(tau_max, {tau}); }

DelayUncertainty DelayUncertainty::random(int tau_max, std::uint64_t seed) {
  require(tau_max >= 0, ErrorCode::InvalidArgument, "tau_max must be nonnegative");
  DelayUncertainty u;
  u.tau_max_ = tau_max;
  u.rng_.emplace(seed);
  return u;
}

int DelayUncertainty::next() {
  if (rng_) return static_cast<int>((*rng_)() % static_cast<std::uint64_t>(tau_max_ + 1));
  const int tau = schedule_[pos_];
  pos_ = (pos_ + 1) % schedule_.size();
  return tau;
}

}  // namespace iqcmpc
