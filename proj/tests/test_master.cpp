#include <gtest/gtest.h>

#include <random>

#include "mfg/linalg.hpp"
#include "mfg/master.hpp"
#include "mfg/nce.hpp"
#include "support/oracles.hpp"
#include "support/random_models.hpp"

using namespace mfg;

namespace {

ModelParams zero_weight_model() {
  ModelParams p = fixtures::random_model(5, 2, 2);
  p.Q0.setZero();
  p.Q0f.setZero();
  p.Q.setZero();
  p.Qf.setZero();
  return p;
}

ResidualSample random_sample(std::mt19937_64& rng, int n, int K, double T) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_real_distribution<double> ut(0.0, T);
  ResidualSample s;
  s.t = ut(rng);
  s.x0 = Vector(n);
  s.z = Vector(n);
  s.zbar = Vector(n * K);
  for (int i = 0; i < n; ++i) {
    s.x0(i) = u(rng);
    s.z(i) = u(rng);
  }
  for (int i = 0; i < n * K; ++i) s.zbar(i) = u(rng);
  s.kappa = static_cast<int>(rng() % static_cast<std::uint64_t>(K + 1));
  return s;
}

double max_relative_residual(const ValidatedModel& m, const MasterSolution& sol, int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int i = 0; i < samples; ++i)
    worst = std::max(worst, master_residual(m, sol, random_sample(rng, m.n(), m.K(), m.params().T)).relative());
  return worst;
}

}  // namespace

TEST(SolveMaster, ZeroWeightsGiveZeroValueFunctions) {
  const ValidatedModel m = validate_model(zero_weight_model());
  const MasterSolution s = solved(solve_master(m, TimeGrid(1.0, 40)));
  for (int i = 0; i < s.grid.size(); ++i) {
    EXPECT_EQ(l1_norm(s.Pd0[i]), 0.0);
    EXPECT_EQ(l1_norm(s.sd0[i]), 0.0);
    EXPECT_EQ(s.rd0[i], 0.0);
    for (int k = 0; k < 2; ++k) {
      EXPECT_EQ(l1_norm(s.Pd[static_cast<std::size_t>(k)][i]), 0.0);
      EXPECT_EQ(l1_norm(s.sd[static_cast<std::size_t>(k)][i]), 0.0);
      EXPECT_EQ(s.rd[static_cast<std::size_t>(k)][i], 0.0);
    }
  }
}

TEST(SolveMaster, TerminalPinsAreExact) {
  const ValidatedModel m = validate_model(fixtures::random_model(19, 3, 2));
  const MasterSolution s = solved(solve_master(m, TimeGrid(1.0, 40)));
  const ModelParams& p = m.params();
  EXPECT_EQ(s.Pd0.back(), m.lifted().Q0fpi);
  EXPECT_EQ(s.sd0.back(), -m.lifted().eta0fpi);
  EXPECT_EQ(s.rd0.back(), p.eta0f.dot(p.Q0f * p.eta0f));
  for (int k = 0; k < 2; ++k) {
    EXPECT_EQ(s.Pd[static_cast<std::size_t>(k)].back(), m.lifted().Qfpi);
    EXPECT_EQ(s.sd[static_cast<std::size_t>(k)].back(), -m.lifted().etafpi);
    EXPECT_EQ(s.rd[static_cast<std::size_t>(k)].back(), p.etaf.dot(p.Qf * p.etaf));
  }
}

TEST(SolveMaster, KernelsAreSymmetric) {
  const ValidatedModel m = validate_model(fixtures::random_model(23, 2, 3));
  const MasterSolution s = solved(solve_master(m, TimeGrid(1.0, 100)));
  for (int i = 0; i < s.grid.size(); ++i) {
    EXPECT_EQ(max_asymmetry(s.Pd0[i]), 0.0);
    for (const auto& P : s.Pd) EXPECT_EQ(max_asymmetry(P[i]), 0.0);
  }
}

TEST(SolveMaster, AgreesWithNceOnRandomModels) {
  for (std::uint64_t seed : {31u, 32u, 33u}) {
    const ValidatedModel m = validate_model(fixtures::random_model(seed, 1 + seed % 3, 1 + seed % 2 + 1));
    const TimeGrid g(1.0, 400);
    const DiffReport rep = compare_nce_master(solved(solve_nce(m, g)), solved(solve_master(m, g)), 1e-9);
    EXPECT_TRUE(rep.pass) << rep.max_diff();
  }
}

TEST(SolveMaster, BlowsUpExactlyWhenNceDoes) {
  ModelParams base = fixtures::scalar_decoupled(0.5, 1.0, 1.0, 1.0, 1.0, 1.0);
  base.Gamma2 = base.Gamma2f = Matrix::Constant(1, 1, 1.5);
  for (double c : {0.5, 2.0, 8.0, 32.0, 128.0}) {
    ModelParams p = base;
    p.Q *= c;
    p.Qf *= c;
    const ValidatedModel m = validate_model(p);
    const TimeGrid g(1.0, 400);
    const auto a = solve_nce(m, g);
    const auto b = solve_master(m, g);
    EXPECT_EQ(blew_up(a), blew_up(b)) << c;
    if (blew_up(a) && blew_up(b)) EXPECT_EQ(blow_up(a).escape_node, blow_up(b).escape_node);
  }
}

TEST(CompareNceMaster, ZeroModelDiffsVanish) {
  const ValidatedModel m = validate_model(zero_weight_model());
  const TimeGrid g(1.0, 30);
  const DiffReport rep = compare_nce_master(solved(solve_nce(m, g)), solved(solve_master(m, g)), 1e-8);
  EXPECT_TRUE(rep.pass);
  EXPECT_EQ(rep.max_diff(), 0.0);
}

TEST(CompareNceMaster, NestedGridsConvergeAtFourthOrder) {
  const ValidatedModel m = validate_model(fixtures::random_model(41, 2, 2));
  const double d1 = compare_nce_master(solved(solve_nce(m, TimeGrid(1.0, 20))),
                                       solved(solve_master(m, TimeGrid(1.0, 10))), 1.0)
                        .max_diff();
  const double d2 = compare_nce_master(solved(solve_nce(m, TimeGrid(1.0, 40))),
                                       solved(solve_master(m, TimeGrid(1.0, 20))), 1.0)
                        .max_diff();
  EXPECT_GT(d1 / d2, 12.0);
  EXPECT_LT(d1 / d2, 20.0);
}

TEST(CompareNceMaster, MismatchedGridsAreRejected) {
  const ValidatedModel m = validate_model(zero_weight_model());
  try {
    compare_nce_master(solved(solve_nce(m, TimeGrid(1.0, 30))), solved(solve_master(m, TimeGrid(1.0, 20))), 1e-8);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::GridMismatch);
  }
}

TEST(MasterResidual, ZeroModelResidualIsExactlyZero) {
  const ValidatedModel m = validate_model(zero_weight_model());
  const MasterSolution s = solved(solve_master(m, TimeGrid(1.0, 40)));
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    const ResidualValue r = master_residual(m, s, random_sample(rng, 2, 2, 1.0));
    EXPECT_EQ(r.residual, 0.0);
  }
}

TEST(MasterResidual, SolvedModelsSatisfyTheMasterEquations) {
  int count = 0;
  for (const auto& p : fixtures::stable_suite()) {
    if (count++ % 4 != 0) continue;
    const ValidatedModel m = validate_model(p);
    const MasterSolution s = solved(solve_master(m, TimeGrid(1.0, 2000)));
    EXPECT_LE(max_relative_residual(m, s, 100, 7), 1e-6);
  }
}

TEST(MasterResidual, PerturbedKernelIsDetected) {
  const ValidatedModel m = validate_model(fixtures::random_model(51, 2, 2));
  const MasterSolution s = solved(solve_master(m, TimeGrid(1.0, 2000)));
  MasterSolution bad = s;
  for (auto& P : bad.Pd0.values) P(0, 0) += 0.01;

  ResidualSample smp;
  smp.t = 0.5;
  smp.x0 = Vector::Unit(2, 0);
  smp.z = Vector::Zero(2);
  smp.zbar = Vector::Zero(4);
  smp.kappa = 0;
  EXPECT_GE(std::abs(master_residual(m, bad, smp).residual), 1e-3);
  EXPECT_LE(std::abs(master_residual(m, s, smp).residual), 1e-8);
}

TEST(MasterResidual, MeasureDerivativeMatchesFiniteDifference) {
  // Directional derivative of V0 along a shift of zbar equals the closed-form
  // contraction 2 (P21 x0 + P22 zbar + s02) . delta.
  const ValidatedModel m = validate_model(fixtures::random_model(61, 2, 2));
  const MasterSolution s = solved(solve_master(m, TimeGrid(1.0, 50)));
  const Matrix& P = s.Pd0[10];
  const Vector& sv = s.sd0[10];
  Vector x0(2), zbar(4), delta(4);
  x0 << 0.3, -0.2;
  zbar << 0.1, 0.5, -0.4, 0.2;
  delta << 1.0, -0.5, 0.25, 0.75;
  auto V = [&](const Vector& zb) {
    Vector xi(6);
    xi << x0, zb;
    return xi.dot(P * xi) + 2.0 * sv.dot(xi);
  };
  const Vector closed = 2.0 * (P.bottomLeftCorner(4, 2) * x0 + P.bottomRightCorner(4, 4) * zbar + sv.tail(4));
  double prev = 0.0;
  for (double eps : {1e-2, 5e-3}) {
    const double fd = (V(zbar + eps * delta) - V(zbar - eps * delta)) / (2.0 * eps);
    const double err = std::abs(fd - closed.dot(delta));
    if (prev > 0.0) EXPECT_LE(err, prev);
    prev = err;
    EXPECT_LE(err, 1e-10);
  }
}

TEST(MasterFeedback, ZeroModelGivesZeroControls) {
  const ValidatedModel m = validate_model(zero_weight_model());
  const MasterSolution s = solved(solve_master(m, TimeGrid(1.0, 20)));
  const ControlPair c = master_feedback(s, m, 0.3, Vector::Ones(2), Vector::Ones(2), Vector::Ones(4), 1);
  EXPECT_EQ(c.u0.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(c.ui.cwiseAbs().maxCoeff(), 0.0);
}

TEST(MasterFeedback, EqualsNceFeedbackAtRandomPoints) {
  const ValidatedModel m = validate_model(fixtures::random_model(71, 2, 3));
  const TimeGrid g(1.0, 500);
  const NceSolution a = solved(solve_nce(m, g));
  const MasterSolution b = solved(solve_master(m, g));
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    ResidualSample smp = random_sample(rng, 2, 3, 1.0);
    const int kappa = 1 + i % 3;
    const ControlPair ca = nce_feedback(a, m, smp.t, smp.x0, smp.z, smp.zbar, kappa);
    const ControlPair cb = master_feedback(b, m, smp.t, smp.x0, smp.z, smp.zbar, kappa);
    EXPECT_LE((ca.u0 - cb.u0).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE((ca.ui - cb.ui).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(MasterFeedback, ScalarGainMatchesAnalyticLqr) {
  const double a = 0.1, b = 0.6, q = 2.0, r = 0.5, qf = 1.0;
  const ValidatedModel m = validate_model(fixtures::scalar_decoupled(a, b, q, r, qf));
  const MasterSolution s = solved(solve_master(m, TimeGrid(1.0, 1000)));
  const ControlPair c = master_feedback(s, m, 0.0, Vector::Zero(1), Vector::Ones(1), Vector::Zero(1), 1);
  EXPECT_NEAR(c.ui(0), -(b / r) * fixtures::scalar_riccati(a, b, q, r, qf, 1.0), 1e-8);
}
