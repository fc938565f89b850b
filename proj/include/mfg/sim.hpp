#pragma once

#include <cstdint>
#include <vector>

#include "mfg/law.hpp"
#include "mfg/model.hpp"
#include "mfg/nce.hpp"
#include "mfg/types.hpp"

namespace mfg {

struct SimulationOptions {
  /// Euler-Maruyama step; 0 selects T / 4000. Must divide the law's grid step.
  double dt = 0.0;
  std::uint64_t seed = 0;
  /// Players per type; empty derives them from pi by largest remainder.
  std::vector<int> type_counts;
  /// Feed the empirical per-type means to the controls instead of the
  /// reference mean field.
  bool empirical_feedback = false;
  /// Keep every store_stride-th simulation node.
  int store_stride = 1;
};

/// One realization of the N + 1 player closed loop. Column i of X and U is
/// minor player i + 1.
struct Trajectory {
  TimeGrid grid;  // storage grid
  int N = 0;
  int n = 0;
  int K = 0;
  std::uint64_t seed = 0;
  std::vector<int> types;  // 1-based type of each minor player

  VectorPath X0;
  MatrixPath X;     // n x N per node
  VectorPath Zbar;  // nK reference mean field
  VectorPath U0;
  MatrixPath U;     // n1 x N per node
};

struct CostEstimate {
  int player = 0;
  double mean = 0.0;
  double std_error = 0.0;
  int samples = 0;
};

/// Deterministic type counts summing to N, proportional to pi (largest remainder).
std::vector<int> type_counts_for(const Vector& pi, int N);

Trajectory simulate(const ValidatedModel& model, int N, const ClosedLoopLaw& law, const SimulationOptions& opts);
Trajectory simulate(const ValidatedModel& model, int N, const NceSolution& sol, const SimulationOptions& opts);

/// Seed of replication r, decorrelated from the base seed by a 64-bit mix.
std::uint64_t replication_seed(std::uint64_t base, int r);

/// Independent replications run in parallel; trajectory r uses replication_seed(opts.seed, r).
std::vector<Trajectory> simulate_batch(const ValidatedModel& model, int N, const ClosedLoopLaw& law,
                                       const SimulationOptions& opts, int replications);

struct MeanErrorReport {
  std::vector<ScalarPath> per_type;  // |mean of type k - Zbar_k| per node
  std::vector<double> sup_per_type;
  double sup = 0.0;
};

/// Gap between each type's empirical mean and the reference mean field.
MeanErrorReport empirical_mean_error(const Trajectory& traj);

/// Discounted running cost (trapezoid on the stored grid) plus the terminal
/// term, averaged over the batch. Player 0 is the major player.
CostEstimate evaluate_cost(const ValidatedModel& model, const std::vector<Trajectory>& batch, int player);

/// Largest entry gap between two trajectories over states, controls and mean field.
double trajectory_distance(const Trajectory& a, const Trajectory& b);

}  // namespace mfg
