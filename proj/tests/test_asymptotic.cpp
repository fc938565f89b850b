#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mfg/asymptotic.hpp"
#include "mfg/linalg.hpp"
#include "mfg/nce.hpp"
#include "support/oracles.hpp"
#include "support/random_models.hpp"

using namespace mfg;

namespace {

ModelParams zero_weight_model(int n = 1) {
  ModelParams p = ModelParams::zeros(n, n, n, 1);
  p.pi = Vector::Ones(1);
  return p;
}

ModelParams coupled_model(std::uint64_t seed, int n) { return fixtures::single_type(fixtures::random_model(seed, n, 1)); }

// Decoupled scalar game: the major and each minor solve independent LQ problems.
ModelParams decoupled_scalar() {
  ModelParams p = zero_weight_model();
  p.A0(0, 0) = 0.3;
  p.B0(0, 0) = 1.2;
  p.Q0(0, 0) = 0.7;
  p.Q0f(0, 0) = 0.4;
  p.R0(0, 0) = 0.8;
  p.eta0(0) = 0.5;
  p.eta0f(0) = -0.2;
  p.A[0](0, 0) = -0.4;
  p.B(0, 0) = 0.9;
  p.Q(0, 0) = 1.1;
  p.Qf(0, 0) = 0.3;
  p.eta(0) = 0.25;
  p.etaf(0) = 0.1;
  p.rho = 0.3;
  return p;
}

double max_path_gap(const MatrixPath& a, const MatrixPath& b) {
  double m = 0.0;
  for (int i = 0; i < a.size(); ++i) m = std::max(m, l1_norm(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(AssembleFiniteN, UncoupledDriftIsBlockDiagonal) {
  ModelParams p = zero_weight_model();
  p.A0(0, 0) = 0.7;
  p.A[0](0, 0) = -1.3;
  const FiniteNSystem s = assemble_finite_n(validate_model(p), 1);
  Matrix expected(2, 2);
  expected << 0.7, 0.0, 0.0, -1.3;
  EXPECT_EQ(s.Ahat, expected);
}

TEST(AssembleFiniteN, MinorSelectorReadsOffDisplay) {
  ModelParams p = zero_weight_model();
  p.Gamma1(0, 0) = 0.4;
  p.Gamma2(0, 0) = 0.6;
  const FiniteNSystem s = assemble_finite_n(validate_model(p), 2);
  Matrix expected(1, 3);
  expected << -0.4, 1.0 - 0.3, -0.3;
  EXPECT_TRUE(s.Kbig(1, false).isApprox(expected, 1e-15));
  Matrix second(1, 3);
  second << -0.4, -0.3, 1.0 - 0.3;
  EXPECT_TRUE(s.Kbig(2, false).isApprox(second, 1e-15));
}

TEST(AssembleFiniteN, DriftMatchesPlayerDynamics) {
  const ModelParams p = coupled_model(7, 2);
  const int N = 3, n = 2;
  const FiniteNSystem s = assemble_finite_n(validate_model(p), N);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  Vector X(n * (N + 1));
  for (Eigen::Index i = 0; i < X.size(); ++i) X(i) = z(rng);

  // dx0 = A0 x0 + F0 mean(x), dxi = A xi + F mean(x) + G x0.
  Vector mean = Vector::Zero(n);
  for (int j = 1; j <= N; ++j) mean += X.segment(j * n, n) / N;
  Vector expected(X.size());
  expected.head(n) = p.A0 * X.head(n) + p.F0 * mean;
  for (int j = 1; j <= N; ++j) expected.segment(j * n, n) = p.A[0] * X.segment(j * n, n) + p.F * mean + p.G * X.head(n);
  EXPECT_LT((s.Ahat * X - expected).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_TRUE(s.Ahat_half.isApprox(s.Ahat - 0.5 * p.rho * Matrix::Identity(8, 8)));
  EXPECT_TRUE(s.Ahat_rho.isApprox(s.Ahat - p.rho * Matrix::Identity(8, 8)));
}

TEST(AssembleFiniteN, ControlInputsSitInTheirOwnBlock) {
  const ModelParams p = coupled_model(8, 2);
  const FiniteNSystem s = assemble_finite_n(validate_model(p), 3);
  const Matrix B2 = s.Bbig(2);
  EXPECT_EQ(B2.rows(), 8);
  EXPECT_EQ(Matrix(B2.middleRows(4, 2)), p.B);
  EXPECT_EQ(B2.norm(), p.B.norm());
  EXPECT_EQ(Matrix(s.Bbig(0).topRows(2)), p.B0);
}

TEST(AssembleFiniteN, WeightsAreCongruences) {
  const ModelParams p = coupled_model(9, 2);
  const FiniteNSystem s = assemble_finite_n(validate_model(p), 4);
  for (int i : {0, 1, 3}) {
    const Matrix K = s.Kbig(i, true);
    const Matrix& W = i == 0 ? p.Q0f : p.Qf;
    EXPECT_LT((s.Qbig(i, true) - K.transpose() * W * K).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(AssembleFiniteN, RejectsHeterogeneousAndOversizedSystems) {
  const ValidatedModel two = validate_model(fixtures::random_model(1, 1, 2));
  EXPECT_THROW(
      {
        try {
          assemble_finite_n(two, 4);
        } catch (const Error& e) {
          EXPECT_EQ(e.kind(), ErrorKind::KNotOne);
          throw;
        }
      },
      Error);
  const ValidatedModel m = validate_model(coupled_model(2, 2));
  try {
    assemble_finite_n(m, 1000);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NTooLargeForMemory);
  }
  EXPECT_NO_THROW(assemble_finite_n(m, 1000, 4000));
}

TEST(SolveFiniteN, ZeroModelStaysZero) {
  const auto sol = solved(solve_finite_n(validate_model(zero_weight_model(2)), 3, TimeGrid(1.0, 20)));
  for (int i = 0; i <= 3; ++i) {
    for (int k = 0; k < sol.grid.size(); ++k) {
      EXPECT_EQ(sol.P_at(i, k).cwiseAbs().maxCoeff(), 0.0);
      EXPECT_EQ(sol.S_at(i, k).cwiseAbs().maxCoeff(), 0.0);
    }
  }
}

TEST(SolveFiniteN, TerminalPinsAreExact) {
  const ValidatedModel m = validate_model(coupled_model(11, 2));
  const FiniteNSystem s = assemble_finite_n(m, 5);
  const auto sol = solved(solve_finite_n(m, 5, TimeGrid(1.0, 20)));
  const int T = sol.grid.steps();
  for (int i = 0; i <= 5; ++i) {
    EXPECT_EQ(sol.P_at(i, T), s.Qbig(i, true));
    EXPECT_EQ(sol.S_at(i, T), -s.qbig(i, true));
  }
}

TEST(SolveFiniteN, DenseAndSymmetricModesAgree) {
  for (int N : {2, 4}) {
    const ValidatedModel m = validate_model(coupled_model(12 + N, 2));
    const TimeGrid g(1.0, 100);
    FiniteNOptions dense;
    dense.dense = true;
    const auto a = solved(solve_finite_n(m, N, g));
    const auto b = solved(solve_finite_n(m, N, g, dense));
    for (int i = 0; i <= N; ++i) {
      for (int k = 0; k < g.size(); ++k) {
        EXPECT_LT(l1_norm(a.P_at(i, k) - b.P_at(i, k)), 1e-12);
        EXPECT_LT(l1_norm(a.S_at(i, k) - b.S_at(i, k)), 1e-12);
      }
    }
  }
}

TEST(SolveFiniteN, SolutionsAreSymmetricAndExchangeable) {
  const ValidatedModel m = validate_model(coupled_model(21, 2));
  FiniteNOptions dense;
  dense.dense = true;
  const auto sol = solved(solve_finite_n(m, 4, TimeGrid(1.0, 80), dense));
  for (int i = 0; i <= 4; ++i) {
    for (int k = 0; k < sol.grid.size(); ++k) {
      EXPECT_LT(max_asymmetry(sol.P_at(i, k)), 1e-10);
      if (i >= 2) EXPECT_LT(l1_norm(sol.P_at(i, k) - swap_minor_blocks(sol.P_at(1, k), 2, 1, i)), 1e-10);
    }
  }
}

TEST(SolveFiniteN, DecoupledMajorBlockMatchesScalarRiccati) {
  const ModelParams p = decoupled_scalar();
  const TimeGrid g(1.0, 200);
  const auto sol = solved(solve_finite_n(validate_model(p), 1, g));
  const double b2r = p.B0(0, 0) * p.B0(0, 0) / p.R0(0, 0);
  for (int k = 0; k < g.size(); k += 10) {
    const double tau = p.T - g.node(k);
    const double exact =
        fixtures::scalar_riccati(p.A0(0, 0) - 0.5 * p.rho, std::sqrt(b2r), p.Q0(0, 0), 1.0, p.Q0f(0, 0), tau);
    EXPECT_NEAR(sol.P[0][k](0, 0), exact, 1e-10) << tau;
  }
}

TEST(SolveFiniteN, DecoupledBlocksMatchTheMeanFieldSolution) {
  // With no coupling the N-player and mean-field problems coincide player by player.
  const ModelParams p = decoupled_scalar();
  const ValidatedModel m = validate_model(p);
  const TimeGrid g(1.0, 200);
  const auto fin = solved(solve_finite_n(m, 3, g));
  const auto nce = solved(solve_nce(m, g));
  for (int k = 0; k < g.size(); ++k) {
    EXPECT_NEAR(fin.P[0][k](0, 0), nce.P0[k](0, 0), 1e-10);
    EXPECT_NEAR(fin.S[0][k](0), nce.s0[k](0), 1e-9);
    EXPECT_NEAR(fin.P[1][k](1, 1), nce.P[0][k](0, 0), 1e-10);
    EXPECT_NEAR(fin.S[1][k](1), nce.s[0][k](0), 1e-9);
  }
}

TEST(SolveFiniteN, StrideKeepsEveryKthNode) {
  const ValidatedModel m = validate_model(coupled_model(23, 1));
  const TimeGrid g(1.0, 40);
  FiniteNOptions o;
  o.store_stride = 8;
  const auto full = solved(solve_finite_n(m, 3, g));
  const auto thin = solved(solve_finite_n(m, 3, g, o));
  ASSERT_EQ(thin.grid.steps(), 5);
  for (int k = 0; k < thin.grid.size(); ++k) EXPECT_EQ(thin.P[1][k], full.P[1][8 * k]);
  EXPECT_EQ(thin.sup_norm, full.sup_norm);
  o.store_stride = 7;
  EXPECT_THROW(solve_finite_n(m, 3, g, o), Error);
}

TEST(SolveLambda, ZeroModelStaysZero) {
  const auto sol = solved(solve_lambda(validate_model(zero_weight_model(2)), TimeGrid(1.0, 20)));
  for (int b = 0; b < kLimitBlockCount; ++b)
    for (const Matrix& v : sol[b].values) EXPECT_EQ(v.cwiseAbs().maxCoeff(), 0.0);
}

TEST(SolveLambda, TerminalPins) {
  const ModelParams p = coupled_model(31, 2);
  const auto sol = solved(solve_lambda(validate_model(p), TimeGrid(1.0, 20)));
  EXPECT_EQ(sol[kMinorMajorOwn].back(), Matrix(-p.Gamma1f.transpose() * p.Qf));
  EXPECT_EQ(sol[kMinorOwn].back(), p.Qf);
  EXPECT_EQ(sol[kMajorOwn].back(), p.Q0f);
  EXPECT_EQ(sol[kMajorCross].back(), Matrix(-p.Q0f * p.Gamma0f));
  EXPECT_EQ(sol[kMinorMajorMean].back(), Matrix(p.Gamma1f.transpose() * p.Qf * p.Gamma2f));
}

TEST(SolveLambda, MatchesMeanFieldBlocksOnTheSuite) {
  for (const ModelParams& raw : fixtures::stable_suite()) {
    const ValidatedModel m = validate_model(fixtures::single_type(raw));
    const TimeGrid g(1.0, 200);
    const auto nce = solve_nce(m, g);
    const auto lam = solve_lambda(m, g);
    ASSERT_EQ(blew_up(nce), blew_up(lam));
    if (blew_up(nce)) continue;
    const DiffReport rep = compare_lambda_phi(solved(lam), phi_from_nce(solved(nce)), 1e-9);
    EXPECT_TRUE(rep.pass) << rep.max_diff();
    EXPECT_LT(max_path_gap(solved(lam)[kMinorOwn], phi_from_nce(solved(nce))[kMinorOwn]), 1e-9);
  }
}

TEST(SolveLambda, EscapesWhenTheMeanFieldSystemDoes) {
  const TimeGrid g(1.0, 400);
  for (double gamma2 : {1.5, 2.0, 3.0}) {
    const double c = fixtures::escape_scale(gamma2, 0.5, g);
    const ValidatedModel below = validate_model(fixtures::repulsive_model(gamma2, 0.5, 0.5 * c));
    EXPECT_FALSE(blew_up(solve_lambda(below, g)));
    EXPECT_FALSE(blew_up(solve_nce(below, g)));
    const ValidatedModel above = validate_model(fixtures::repulsive_model(gamma2, 0.5, 1.5 * c));
    const auto a = solve_lambda(above, g);
    const auto b = solve_nce(above, g);
    ASSERT_TRUE(blew_up(a));
    ASSERT_TRUE(blew_up(b));
    EXPECT_LE(std::abs(blow_up(a).escape_node - blow_up(b).escape_node), 2);
    EXPECT_EQ(blow_up(a).phase, "lambda");
  }
}

TEST(PhiFromNce, ZeroModelGivesZeroBlocks) {
  const ValidatedModel m = validate_model(zero_weight_model());
  const PhiSolution phi = phi_from_nce(solved(solve_nce(m, TimeGrid(1.0, 10))));
  for (int b = 0; b < kLimitBlockCount; ++b)
    for (const Matrix& v : phi[b].values) EXPECT_EQ(v.cwiseAbs().maxCoeff(), 0.0);
}

TEST(PhiFromNce, ReassemblyIsExact) {
  const ValidatedModel m = validate_model(coupled_model(41, 3));
  const NceSolution nce = solved(solve_nce(m, TimeGrid(1.0, 30)));
  const PhiSolution phi = phi_from_nce(nce);
  for (int k = 0; k < nce.grid.size(); ++k) {
    const auto [P0, P1] = assemble_phi(phi, k);
    EXPECT_EQ(P0, nce.P0[k]);
    EXPECT_EQ(P1, nce.P[0][k]);
  }
}

TEST(PhiFromNce, TerminalCrossBlockIsTheCongruenceBlock) {
  const ModelParams p = coupled_model(42, 2);
  const PhiSolution phi = phi_from_nce(solved(solve_nce(validate_model(p), TimeGrid(1.0, 10))));
  const Matrix expected = -p.Q0f * p.Gamma0f;
  EXPECT_LT((phi[kMajorCross].back() - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(PhiFromNce, RejectsHeterogeneousSolutions) {
  const ValidatedModel m = validate_model(fixtures::random_model(5, 1, 2));
  try {
    phi_from_nce(solved(solve_nce(m, TimeGrid(1.0, 10))));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::KNotOne);
  }
}

TEST(CompareLambdaPhi, RefinementNeverGrowsTheGap) {
  const ValidatedModel m = validate_model(coupled_model(51, 2));
  double prev = 1.0;
  for (int M : {25, 50, 100}) {
    const TimeGrid g(1.0, M);
    const double d =
        compare_lambda_phi(solved(solve_lambda(m, g)), phi_from_nce(solved(solve_nce(m, g))), 1e-9).max_diff();
    EXPECT_LE(d, prev + 1e-15);
    prev = d;
  }
}

TEST(CompareLambdaPhi, ZeroModelAndMismatchedGrids) {
  const ValidatedModel m = validate_model(zero_weight_model());
  const auto lam = solved(solve_lambda(m, TimeGrid(1.0, 30)));
  EXPECT_EQ(compare_lambda_phi(lam, phi_from_nce(solved(solve_nce(m, TimeGrid(1.0, 30)))), 0.0).max_diff(), 0.0);
  try {
    compare_lambda_phi(lam, phi_from_nce(solved(solve_nce(m, TimeGrid(1.0, 20)))), 1e-9);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::GridMismatch);
  }
}

TEST(BlockStructure, ZeroModelHasOneCluster) {
  const auto sol = solved(solve_finite_n(validate_model(zero_weight_model(2)), 4, TimeGrid(1.0, 10)));
  const StructureReport r = extract_block_structure(sol);
  EXPECT_EQ(r.max_clusters(0), 1);
  EXPECT_EQ(r.max_clusters(1), 1);
}

TEST(BlockStructure, DecoupledMajorKernelHasTwoClusters) {
  FiniteNOptions dense;
  dense.dense = true;
  const auto sol = solved(solve_finite_n(validate_model(decoupled_scalar()), 3, TimeGrid(1.0, 40), dense));
  const StructureReport r = extract_block_structure(sol);
  EXPECT_EQ(r.min_clusters(0), 2);
  EXPECT_EQ(r.max_clusters(0), 2);
  for (int k = 0; k < sol.grid.size(); ++k) {
    Matrix off = sol.P[0][k];
    off(0, 0) = 0.0;
    EXPECT_EQ(off.cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(BlockStructure, CoupledKernelsHaveThreeAndSixTiles) {
  for (std::uint64_t seed : {61u, 62u}) {
    const auto sol = solved(solve_finite_n(validate_model(coupled_model(seed, 2)), 10, TimeGrid(1.0, 100)));
    const StructureReport r = extract_block_structure(sol);
    EXPECT_EQ(r.min_clusters(0), 3);
    EXPECT_EQ(r.max_clusters(0), 3);
    EXPECT_EQ(r.min_clusters(1), 6);
    EXPECT_EQ(r.max_clusters(1), 6);
    EXPECT_EQ(r.tiles.size(), 9u);
  }
}

TEST(BlockStructure, ScaledTilesApproachTheLimitAtRateOneOverN) {
  const ValidatedModel m = validate_model(coupled_model(71, 2));
  const TimeGrid g(1.0, 100);
  const LambdaSolution lam = solved(solve_lambda(m, g));
  std::vector<double> err;
  for (int N : {4, 8, 16}) {
    const StructureReport r = extract_block_structure(solved(solve_finite_n(m, N, g)));
    err.push_back(compare_structure_lambda(r, lam, 1.0).max_diff());
  }
  for (std::size_t i = 1; i < err.size(); ++i) {
    const double ratio = err[i - 1] / err[i];
    EXPECT_GT(ratio, 1.6) << i;
    EXPECT_LT(ratio, 2.5) << i;
  }
}

TEST(BlockStructure, FittedExponentsMatchTheDefaults) {
  const ValidatedModel m = validate_model(coupled_model(72, 2));
  const TimeGrid g(1.0, 50);
  std::vector<StructureReport> reps;
  for (int N : {4, 8, 16, 32}) reps.push_back(extract_block_structure(solved(solve_finite_n(m, N, g))));
  const ExponentFit fit = fit_scaling_exponents(reps);
  EXPECT_EQ(fit.exponents, default_tile_exponents());
  for (std::size_t t = 0; t < fit.slopes.size(); ++t)
    EXPECT_NEAR(fit.slopes[t], -default_tile_exponents()[t], 0.1) << t;
}

TEST(BlockStructure, VanishingTilesFallBackToDefaults) {
  const ValidatedModel m = validate_model(zero_weight_model());
  const TimeGrid g(1.0, 10);
  std::vector<StructureReport> reps;
  for (int N : {2, 4}) reps.push_back(extract_block_structure(solved(solve_finite_n(m, N, g))));
  EXPECT_EQ(fit_scaling_exponents(reps).exponents, default_tile_exponents());
  EXPECT_THROW(fit_scaling_exponents({reps[0]}), Error);
}

TEST(AsymptoticSolvability, ZeroModelIsTriviallyBounded) {
  const SolvabilityReport r =
      check_asymptotic_solvability(validate_model(zero_weight_model()), {2, 4, 8}, TimeGrid(1.0, 20));
  for (const auto& v : r.norms) {
    ASSERT_TRUE(v.has_value());
    EXPECT_EQ(*v, 0.0);
  }
  EXPECT_TRUE(r.bounded);
  EXPECT_TRUE(r.lambda_solvable);
  EXPECT_TRUE(r.consistent());
}

TEST(AsymptoticSolvability, StableModelIsBoundedAndLimitSolvable) {
  const SolvabilityReport r =
      check_asymptotic_solvability(validate_model(coupled_model(81, 2)), {2, 4, 8, 16, 32}, TimeGrid(1.0, 100));
  EXPECT_TRUE(r.bounded);
  EXPECT_TRUE(r.lambda_solvable);
  EXPECT_TRUE(r.consistent());
}

TEST(AsymptoticSolvability, EscapingLimitLosesTheBound) {
  const TimeGrid g(1.0, 200);
  const double c = fixtures::escape_scale(2.0, 0.5, g);
  const SolvabilityReport r = check_asymptotic_solvability(validate_model(fixtures::repulsive_model(2.0, 0.5, 1.5 * c)),
                                                           {2, 4, 8, 16, 32}, g);
  EXPECT_FALSE(r.lambda_solvable);
  ASSERT_TRUE(r.lambda_blowup.has_value());
  EXPECT_FALSE(r.bounded);
  EXPECT_TRUE(r.consistent());
}
