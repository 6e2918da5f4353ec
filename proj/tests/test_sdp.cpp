#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <random>

#include "iqcmpc/sdp.hpp"

using namespace iqcmpc;

TEST(AffineSym, CongruenceEmbedAndKron) {
  const AffineSym x = AffineSym::term(2, 0, Matrix{{1.0, 0.5}, {0.5, 0.0}});
  const AffineSym c = AffineSym::constant(Matrix{{2.0, 0.0}, {0.0, 3.0}});
  const AffineSym sum = x + c;
  Vector v(1);
  v << 4.0;
  EXPECT_EQ(sum.evaluate(v).mat(), (Matrix{{6.0, 2.0}, {2.0, 3.0}}));

  const Matrix t{{1.0}, {2.0}};
  EXPECT_NEAR(sum.congruence(t).evaluate(v)(0, 0), 6.0 + 8.0 + 12.0, 1e-14);

  const SymMatrix big = sum.embed(4, 1).evaluate(v);
  EXPECT_EQ(big.mat().block(1, 1, 2, 2), sum.evaluate(v).mat());
  EXPECT_DOUBLE_EQ(big(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(big(3, 3), 0.0);

  const Matrix kron = AffineSym::term(1, 0, Matrix::Ones(1, 1)).kron_left(Matrix{{1.0, 1.0}, {1.0, 1.0}}).evaluate(v).mat();
  EXPECT_EQ(kron, Matrix::Constant(2, 2, 4.0));

  const SymMatrix bd = AffineSym::block_diag({c, -x}).evaluate(v);
  EXPECT_DOUBLE_EQ(bd(2, 2), -4.0);
  EXPECT_DOUBLE_EQ(bd(0, 2), 0.0);
  EXPECT_THROW(c + AffineSym(3), Error);
}

TEST(Sdp, ScalarLinearProgram) {
  SdpProblem prob;
  const ScalarVar p = prob.add_scalar();
  // -2p <= -1
  prob.add_lmi(-2.0 * p.expr() + AffineSym::constant(Matrix::Ones(1, 1)), LmiSense::NegDef);
  prob.minimize(p.expr());
  const auto sol = solve_sdp(prob);
  EXPECT_NEAR(sol.value(p), 0.5, 1e-8);
  EXPECT_GE(sol.margin, 0.0);
}

TEST(Sdp, LyapunovFeasibility) {
  SdpProblem prob;
  const SymVar p = prob.add_symmetric(2);
  const Matrix a = 0.5 * Matrix::Identity(2, 2);
  prob.add_lmi(p.expr(), LmiSense::PosDef, 1e-6);
  prob.add_lmi(p.expr().congruence(a) - p.expr(), LmiSense::NegDef, 1e-6);
  const auto sol = solve_sdp(prob);
  const SymMatrix pv = sol.value(p);
  EXPECT_GT(lambda_min(pv), 1e-6);
  EXPECT_LT(lambda_max(SymMatrix::symmetrize(a.transpose() * pv.mat() * a - pv.mat())), -1e-6);
}

TEST(Sdp, LargestEigenvalueAsSdp) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  Matrix r(5, 5);
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 5; ++j) r(i, j) = g(rng);
  const Matrix a = 0.5 * (r + r.transpose());
  SdpProblem prob;
  const ScalarVar t = prob.add_scalar();
  prob.add_lmi(t.expr().kron_left(Matrix::Identity(5, 5)) - AffineSym::constant(a), LmiSense::PosDef);
  prob.minimize(t.expr());
  const auto sol = solve_sdp(prob);
  Eigen::SelfAdjointEigenSolver<Matrix> ref(a);
  EXPECT_NEAR(sol.value(t), ref.eigenvalues().maxCoeff(), 1e-7);
}

TEST(Sdp, SchurComplementBound) {
  // [[t, 1], [1, x]] >= 0 with x <= 2: minimal t = 1/2.
  SdpProblem prob;
  const ScalarVar t = prob.add_scalar();
  const ScalarVar x = prob.add_scalar(std::nullopt, 2.0);
  AffineSym m = t.expr().embed(2, 0) + x.expr().embed(2, 1) + AffineSym::constant(Matrix{{0.0, 1.0}, {1.0, 0.0}});
  prob.add_lmi(m, LmiSense::PosDef);
  prob.minimize(t.expr());
  const auto sol = solve_sdp(prob);
  EXPECT_NEAR(sol.value(t), 0.5, 1e-7);
  EXPECT_NEAR(sol.value(x), 2.0, 1e-6);
}

TEST(Sdp, InfeasibleIsReported) {
  SdpProblem prob;
  const ScalarVar p = prob.add_scalar(1.0);
  prob.add_lmi(p.expr(), LmiSense::NegDef);
  try {
    solve_sdp(prob);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Infeasible);
  }
}

TEST(Sdp, UnstableLyapunovIsInfeasible) {
  SdpProblem prob;
  const SymVar p = prob.add_symmetric(2);
  const Matrix a{{1.1, 0.0}, {0.3, 0.5}};
  prob.add_lmi(p.expr(), LmiSense::PosDef, 1e-6);
  prob.add_lmi(p.expr().congruence(a) - p.expr(), LmiSense::NegDef, 1e-6);
  try {
    solve_sdp(prob);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Infeasible);
  }
}

TEST(Sdp, RejectsUndeclaredVariables) {
  SdpProblem prob;
  EXPECT_THROW(prob.add_lmi(AffineSym::term(1, 3, Matrix::Ones(1, 1)), LmiSense::PosDef), Error);
  EXPECT_THROW(solve_sdp(prob), Error);
}
