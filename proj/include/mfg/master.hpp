#pragma once

#include <vector>

#include "mfg/law.hpp"
#include "mfg/model.hpp"
#include "mfg/nce.hpp"
#include "mfg/types.hpp"

namespace mfg {

/// Coefficients of the quadratic value functions
///   V0(t, x0, mu)     = xi0^T Pd0 xi0 + 2 sd0^T xi0 + rd0,        xi0 = (x0, zbar)
///   Vk(t, z, x0, mu)  = xik^T Pd_k xik + 2 sd_k^T xik + rd_k,     xik = (z, x0, zbar)
/// where zbar stacks the per-type means of mu. Index k of the vectors is type k+1.
struct MasterSolution {
  TimeGrid grid;
  int n = 0;
  int K = 0;

  MatrixPath Pd0;
  std::vector<MatrixPath> Pd;
  VectorPath sd0;
  std::vector<VectorPath> sd;
  ScalarPath rd0;
  std::vector<ScalarPath> rd;

  MatrixPath Abar;  // nK x nK
  MatrixPath Gbar;  // nK x n
  VectorPath mbar;  // nK
};

/// Riccati system for (Pd0, Pd_1..K), then the offsets, then the scalar terms.
OrBlowUp<MasterSolution> solve_master(const ValidatedModel& model, const TimeGrid& grid);

/// Point of (t, x0, z, zbar) space at which a master equation is checked;
/// kappa = 0 selects the major player's equation, kappa >= 1 a minor type.
struct ResidualSample {
  double t = 0.0;
  Vector x0;
  Vector z;
  Vector zbar;
  int kappa = 0;
};

struct ResidualValue {
  double residual = 0.0;  // LHS - RHS
  double value = 0.0;     // V at the sample
  double relative() const;
};

/// Evaluates (-dV/dt + rho V) - RHS of the master equation at the sample,
/// with every measure-derivative term in closed form through zbar. V and
/// dV/dt come from local quartic interpolation of the stored coefficient
/// paths, so the check does not reuse the solver's vector field.
ResidualValue master_residual(const ValidatedModel& model, const MasterSolution& sol, const ResidualSample& sample);

ControlPair master_feedback(const MasterSolution& sol, const ValidatedModel& model, double t, const Vector& x0,
                            const Vector& z, const Vector& zbar, int kappa);

ClosedLoopLaw master_law(const MasterSolution& sol, const ValidatedModel& model);

/// Max-over-shared-nodes l1 differences of P, s and the mean-field
/// coefficients. Grids must be equal or one must refine the other.
DiffReport compare_nce_master(const NceSolution& nce, const MasterSolution& master, double tolerance);

}  // namespace mfg
