#include <gtest/gtest.h>

#include <cmath>

#include "mfg/linalg.hpp"
#include "mfg/nce.hpp"
#include "support/oracles.hpp"
#include "support/random_models.hpp"

using namespace mfg;

namespace {

double max_diff(const MatrixPath& a, const MatrixPath& b, int stride_b = 1) {
  double m = 0.0;
  for (int i = 0; i < a.size(); ++i) m = std::max(m, l1_norm(a[i] - b[i * stride_b]));
  return m;
}

ModelParams zero_weight_model() {
  ModelParams p = fixtures::random_model(5, 2, 2);
  p.Q0.setZero();
  p.Q0f.setZero();
  p.Q.setZero();
  p.Qf.setZero();
  return p;
}

}  // namespace

TEST(SolveNce, ZeroWeightsGiveZeroValueAndOpenLoopMeanField) {
  const ValidatedModel m = validate_model(zero_weight_model());
  const auto r = solve_nce(m, TimeGrid(1.0, 50));
  ASSERT_FALSE(blew_up(r));
  const NceSolution& s = solved(r);
  const auto& p = m.params();
  const int n = 2, K = 2;
  for (int i = 0; i < s.grid.size(); ++i) {
    EXPECT_EQ(l1_norm(s.P0[i]), 0.0);
    EXPECT_EQ(l1_norm(s.s0[i]), 0.0);
    for (int k = 0; k < K; ++k) {
      EXPECT_EQ(l1_norm(s.P[static_cast<std::size_t>(k)][i]), 0.0);
      EXPECT_EQ(l1_norm(s.s[static_cast<std::size_t>(k)][i]), 0.0);
      const Matrix row = p.A[static_cast<std::size_t>(k)] * block_selector(k + 1, K, n) + m.lifted().Fpi;
      EXPECT_EQ(s.Abar[i].middleRows(k * n, n), row);
      EXPECT_EQ(s.Gbar[i].middleRows(k * n, n), p.G);
    }
    EXPECT_EQ(l1_norm(s.mbar[i]), 0.0);
  }
}

TEST(SolveNce, TerminalPinsAreExact) {
  const ValidatedModel m = validate_model(fixtures::random_model(11, 2, 3));
  const NceSolution s = solved(solve_nce(m, TimeGrid(1.0, 40)));
  const PiLifted& l = m.lifted();
  EXPECT_EQ(s.P0.back(), l.Q0fpi);
  EXPECT_EQ(s.s0.back(), -l.eta0fpi);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(s.P[static_cast<std::size_t>(k)].back(), l.Qfpi);
    EXPECT_EQ(s.s[static_cast<std::size_t>(k)].back(), -l.etafpi);
  }
}

TEST(SolveNce, ScalarDecoupledMatchesClosedFormRiccati) {
  const double a = 0.3, b = 0.8, q = 1.5, r = 0.7, qf = 0.4, T = 1.0;
  const ValidatedModel m = validate_model(fixtures::scalar_decoupled(a, b, q, r, qf, T));
  const NceSolution s = solved(solve_nce(m, TimeGrid(T, 1000)));
  for (int i = 0; i < s.grid.size(); i += 100)
    EXPECT_NEAR(s.P[0][i](0, 0), fixtures::scalar_riccati(a, b, q, r, qf, T - s.grid.node(i)), 1e-8);
}

TEST(SolveNce, ConstraintsHoldExactlyAtEveryNode) {
  const ValidatedModel m = validate_model(fixtures::random_model(3, 2, 2));
  const NceSolution s = solved(solve_nce(m, TimeGrid(1.0, 60)));
  const int n = 2, K = 2;
  const Matrix& M = m.M();
  for (int i = 0; i < s.grid.size(); ++i) {
    for (int k = 0; k < K; ++k) {
      const Matrix& Pk = s.P[static_cast<std::size_t>(k)][i];
      const Matrix row = (m.params().A[static_cast<std::size_t>(k)] - M * Pk.topLeftCorner(n, n)) *
                             block_selector(k + 1, K, n) +
                         m.lifted().Fpi - M * Pk.block(0, 2 * n, n, n * K);
      EXPECT_LE((s.Abar[i].middleRows(k * n, n) - row).cwiseAbs().maxCoeff(), 1e-15);
      EXPECT_LE((s.Gbar[i].middleRows(k * n, n) - (m.params().G - M * Pk.block(0, n, n, n))).cwiseAbs().maxCoeff(),
                1e-15);
      const Vector mk =
          -m.params().B * m.Rinv() * m.lifted().Bbig.transpose() * s.s[static_cast<std::size_t>(k)][i];
      EXPECT_LE((s.mbar[i].segment(k * n, n) - mk).cwiseAbs().maxCoeff(), 1e-14);
    }
  }
}

TEST(SolveNce, RiccatiIteratesArePsdAndSymmetric) {
  for (const auto& p : fixtures::stable_suite()) {
    const ValidatedModel m = validate_model(p);
    const auto r = solve_nce(m, TimeGrid(1.0, 200));
    ASSERT_FALSE(blew_up(r));
    const NceSolution& s = solved(r);
    for (int i = 0; i < s.grid.size(); ++i) {
      EXPECT_GE(min_eigenvalue(s.P0[i]), -1e-8);
      EXPECT_EQ(max_asymmetry(s.P0[i]), 0.0);
      for (const auto& Pk : s.P) EXPECT_GE(min_eigenvalue(Pk[i]), -1e-8);
    }
  }
}

TEST(SolveNce, RefinementConvergesAtFourthOrder) {
  const ValidatedModel m = validate_model(fixtures::random_model(21, 2, 2));
  const NceSolution ref = solved(solve_nce(m, TimeGrid(1.0, 320)));
  const NceSolution c1 = solved(solve_nce(m, TimeGrid(1.0, 10)));
  const NceSolution c2 = solved(solve_nce(m, TimeGrid(1.0, 20)));
  // Compare at the coarse nodes, shared by every grid.
  const double e1 = max_diff(c1.P[1], ref.P[1], 32) + max_diff(c1.P0, ref.P0, 32);
  const double e2 = max_diff(c2.P[1], ref.P[1], 16) + max_diff(c2.P0, ref.P0, 16);
  EXPECT_GT(e1 / e2, 12.0);
  EXPECT_LT(e1 / e2, 20.0);

  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i <= 10; ++i) {
    s1 = std::max(s1, l1_norm(c1.s0[i] - ref.s0[32 * i]));
    s2 = std::max(s2, l1_norm(c2.s0[2 * i] - ref.s0[32 * i]));
  }
  EXPECT_GT(s1 / s2, 12.0);
  EXPECT_LT(s1 / s2, 20.0);
}

TEST(SolveNce, EscapeIsReportedFromRiccatiPhase) {
  ModelParams p = fixtures::scalar_decoupled(1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
  p.Gamma2 = Matrix::Constant(1, 1, 1.5);
  p.Gamma2f = Matrix::Constant(1, 1, 1.5);
  p.Q *= 40.0;
  p.Qf *= 40.0;
  const auto r = solve_nce(validate_model(p), TimeGrid(1.0, 400));
  ASSERT_TRUE(blew_up(r));
  EXPECT_EQ(blow_up(r).phase, "riccati");
}

TEST(NceFeedback, ZeroWeightModelGivesZeroControls) {
  const ValidatedModel m = validate_model(zero_weight_model());
  const NceSolution s = solved(solve_nce(m, TimeGrid(1.0, 20)));
  const ControlPair c = nce_feedback(s, m, 0.37, Vector::Ones(2), Vector::Ones(2), Vector::Ones(4), 2);
  EXPECT_EQ(c.u0.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(c.ui.cwiseAbs().maxCoeff(), 0.0);
}

TEST(NceFeedback, TerminalMajorControlIsTheTargetPull) {
  const ValidatedModel m = validate_model(fixtures::random_model(13, 2, 2));
  const NceSolution s = solved(solve_nce(m, TimeGrid(1.0, 20)));
  const ControlPair c = nce_feedback(s, m, 1.0, Vector::Zero(2), Vector::Zero(2), Vector::Zero(4), 1);
  const Vector expected = m.R0inv() * m.lifted().B0big.transpose() * m.lifted().eta0fpi;
  EXPECT_LE((c.u0 - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(NceFeedback, ScalarGainMatchesAnalyticLqr) {
  const double a = -0.2, b = 1.1, q = 0.9, r = 1.3, qf = 0.0;
  const ValidatedModel m = validate_model(fixtures::scalar_decoupled(a, b, q, r, qf));
  const NceSolution s = solved(solve_nce(m, TimeGrid(1.0, 1000)));
  const ControlPair c = nce_feedback(s, m, 0.0, Vector::Zero(1), Vector::Ones(1), Vector::Zero(1), 1);
  EXPECT_NEAR(c.ui(0), -(b / r) * fixtures::scalar_riccati(a, b, q, r, qf, 1.0), 1e-8);
}

TEST(NceFeedback, RejectsTimeOutsideHorizon) {
  const ValidatedModel m = validate_model(zero_weight_model());
  const NceSolution s = solved(solve_nce(m, TimeGrid(1.0, 20)));
  try {
    nce_feedback(s, m, 1.5, Vector::Zero(2), Vector::Zero(2), Vector::Zero(4), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TimeOutOfRange);
  }
}

TEST(PropagateMeanField, ZeroFieldKeepsInitialMean) {
  ModelParams p = ModelParams::zeros(2, 1, 1, 2);
  p.alpha0 << 0.3, -0.4;
  const ValidatedModel m = validate_model(p);
  const NceSolution s = solved(solve_nce(m, TimeGrid(1.0, 30)));
  VectorPath x0;
  x0.grid = s.grid;
  x0.values.assign(31, Vector::Ones(2));
  const VectorPath z = propagate_mean_field(s, m, x0);
  for (const auto& v : z.values) {
    EXPECT_EQ(v.head(2), p.alpha0);
    EXPECT_EQ(v.tail(2), p.alpha0);
  }
}

TEST(PropagateMeanField, ConstantRateGivesExponential) {
  ModelParams p = ModelParams::zeros(1, 1, 1, 1);
  p.A[0](0, 0) = -0.4;
  p.F(0, 0) = 0.9;
  p.alpha0(0) = 1.7;
  const ValidatedModel m = validate_model(p);
  const NceSolution s = solved(solve_nce(m, TimeGrid(1.0, 1000)));
  VectorPath x0;
  x0.grid = s.grid;
  x0.values.assign(1001, Vector::Zero(1));
  const VectorPath z = propagate_mean_field(s, m, x0);
  EXPECT_NEAR(z.back()(0), 1.7 * std::exp(0.5), 1e-8);
}

TEST(PropagateMeanField, RejectsNonNestedGrid) {
  const ValidatedModel m = validate_model(zero_weight_model());
  const NceSolution s = solved(solve_nce(m, TimeGrid(1.0, 20)));
  VectorPath x0;
  x0.grid = TimeGrid(1.0, 30);
  x0.values.assign(31, Vector::Zero(2));
  try {
    propagate_mean_field(s, m, x0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::GridMismatch);
  }
}
