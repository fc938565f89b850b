#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mfg/model.hpp"
#include "mfg/nce.hpp"
#include "mfg/types.hpp"

namespace mfg {

/// Matrices of the N-player game with homogeneous minor players, on the
/// joint state (x0, x1, ..., xN). Block b of a big vector is rows [b n, (b+1) n).
struct FiniteNSystem {
  int N = 0;
  int n = 0;
  double rho = 0.0;

  Matrix Ahat;      // (N+1)n square
  Matrix Ahat_half; // Ahat - rho/2 I
  Matrix Ahat_rho;  // Ahat - rho I
  Matrix K0, K0f;   // n x (N+1)n
  Matrix Q0, Q0f;   // K0^T Q0 K0 and the terminal version
  Vector q0, q0f;   // K0^T Q0 eta0 and K0f^T Q0f eta0f

  // Model blocks reused by the structured products and the per-player weights.
  Matrix A0, A, F0, F, G, M0, M;
  Matrix B0, B;
  Matrix Q, Qf, Gamma1, Gamma1f, Gamma2, Gamma2f;
  Vector eta, etaf;

  int dim() const { return (N + 1) * n; }
  /// e_{k+1} (x) B0 for k = 0, e_{k+1} (x) B for minor k in 1..N.
  Matrix Bbig(int k) const;
  /// Selector of minor player i minus its cost target; terminal = true uses the terminal weights.
  Matrix Kbig(int i, bool terminal) const;
  Matrix Qbig(int i, bool terminal) const;
  Vector qbig(int i, bool terminal) const;
};

/// Throws KNotOne for heterogeneous models and NTooLargeForMemory when
/// (N+1)n exceeds memory_cap.
FiniteNSystem assemble_finite_n(const ValidatedModel& model, int N, int memory_cap = 2000);

/// Reorders minor blocks i and j of every row and column (blocks are 1-based
/// minor indices; block 0 is the major player).
Matrix swap_minor_blocks(const Matrix& X, int n, int i, int j);
Vector swap_minor_blocks(const Vector& v, int n, int i, int j);

struct FiniteNOptions {
  /// Integrate all N+1 equations instead of P0, P1 and their permutations.
  bool dense = false;
  int memory_cap = 2000;
  /// Keep every store_stride-th node; must divide the number of steps.
  int store_stride = 1;
  double blowup_threshold = 1e12;
};

struct FiniteNSolution {
  int N = 0;
  int n = 0;
  bool dense = false;
  TimeGrid grid;  // storage grid (coarser than the integration grid when strided)

  // Symmetric mode keeps players 0 and 1 only; dense mode keeps all N+1.
  std::vector<MatrixPath> P;
  std::vector<VectorPath> S;

  /// max over every integration node of |P0|_l1 + |P1|_l1
  double sup_norm = 0.0;

  Matrix P_at(int i, int node) const;
  Vector S_at(int i, int node) const;
  MatrixPath P_path(int i) const;
};

/// Riccati equations of all players and the linear offset equations advanced
/// together backward from their terminal weights. Dense mode also checks the
/// exchangeability shortcut and throws PermutationMismatch above 1e-8.
OrBlowUp<FiniteNSolution> solve_finite_n(const ValidatedModel& model, int N, const TimeGrid& grid,
                                         const FiniteNOptions& opts = {});

/// Index of each n x n block of the limiting system.
enum LimitBlock : int {
  kMajorOwn = 0,    // Lambda1^0: (x0, x0) of the major player
  kMajorCross,      // Lambda2^0: (x0, zbar)
  kMajorMean,       // Lambda3^0: (zbar, zbar)
  kMinorMajor,      // Lambda0: (x0, x0) of a minor player
  kMinorOwn,        // Lambda1: (x_i, x_i)
  kMinorCross,      // Lambda2: (x_i, zbar)
  kMinorMean,       // Lambda3: (zbar, zbar)
  kMinorMajorOwn,   // Lambda_a: (x0, x_i)
  kMinorMajorMean,  // Lambda_b: (x0, zbar)
  kLimitBlockCount
};

const char* limit_block_label(int block);
bool limit_block_symmetric(int block);

struct LambdaSolution {
  TimeGrid grid;
  int n = 0;
  std::array<MatrixPath, kLimitBlockCount> blocks;
  Matrix M0, M;

  const MatrixPath& operator[](int b) const { return blocks[static_cast<std::size_t>(b)]; }
};

struct PhiSolution {
  TimeGrid grid;
  int n = 0;
  std::array<MatrixPath, kLimitBlockCount> blocks;

  const MatrixPath& operator[](int b) const { return blocks[static_cast<std::size_t>(b)]; }
};

OrBlowUp<LambdaSolution> solve_lambda(const ValidatedModel& model, const TimeGrid& grid);

/// Re-partitions the K = 1 Riccati kernels into the nine blocks.
PhiSolution phi_from_nce(const NceSolution& nce);

/// Inverse of phi_from_nce at one node: (P0, P1).
std::pair<Matrix, Matrix> assemble_phi(const PhiSolution& phi, int node);

DiffReport compare_lambda_phi(const LambdaSolution& lambda, const PhiSolution& phi, double tolerance);

/// One representative tile of P0 (matrix 0) or P1 (matrix 1), its scaled
/// version N^exponent * tile and the limit block it approaches.
struct TileSeries {
  std::string label;
  int matrix = 0;
  int row = 0;
  int col = 0;
  int limit_block = 0;
  int exponent = 0;
  MatrixPath raw;
  MatrixPath scaled;
};

struct StructureReport {
  int N = 0;
  int n = 0;
  double tolerance = 0.0;
  std::vector<int> clusters_p0;  // per stored node
  std::vector<int> clusters_p1;
  std::vector<TileSeries> tiles;

  int max_clusters(int matrix) const;
  int min_clusters(int matrix) const;
};

/// Default exponents, one per representative tile, in the order of the
/// report: P0 (0,0) (0,1) (1,1); P1 (0,0) (0,1) (0,2) (1,1) (1,2) (2,2).
const std::vector<int>& default_tile_exponents();

/// Counts distinct upper-triangle n x n tiles (greedy clustering at l1
/// distance `tolerance`) at every node and extracts the representative tiles.
StructureReport extract_block_structure(const FiniteNSolution& fin, double tolerance = 1e-8,
                                        const std::vector<int>& exponents = default_tile_exponents());

struct ExponentFit {
  std::vector<double> slopes;  // log sup|tile| against log N
  std::vector<int> exponents;  // -round(slope), or the default when a tile vanishes
};

/// Regresses each representative tile's size against N. Needs reports for
/// at least two values of N.
ExponentFit fit_scaling_exponents(const std::vector<StructureReport>& reports);

/// Max-node l1 gaps between the scaled tiles and the limit blocks.
DiffReport compare_structure_lambda(const StructureReport& report, const LambdaSolution& lambda, double tolerance);

struct SolvabilityReport {
  std::vector<int> N;
  std::vector<std::optional<double>> norms;  // empty where the N-player system escaped
  std::vector<std::optional<BlowUpReport>> blowups;
  /// Heuristic stand-in for a uniform bound: the last three solves succeeded
  /// and their norms are within 10% of each other.
  bool bounded = false;
  bool lambda_solvable = false;
  std::optional<BlowUpReport> lambda_blowup;

  bool consistent() const { return bounded == lambda_solvable; }
};

/// Per-N solves run in parallel (MFG_THREADS caps the worker count).
SolvabilityReport check_asymptotic_solvability(const ValidatedModel& model, const std::vector<int>& N_list,
                                               const TimeGrid& grid, const FiniteNOptions& opts = {});

}  // namespace mfg
