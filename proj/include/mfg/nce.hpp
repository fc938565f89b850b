#pragma once

#include <vector>

#include "mfg/law.hpp"
#include "mfg/model.hpp"
#include "mfg/types.hpp"

namespace mfg {

/// Solution of the coupled Riccati/offset system produced by the consistent
/// mean field approximation. Index k of P and s is type k+1.
struct NceSolution {
  TimeGrid grid;
  int n = 0;
  int K = 0;

  MatrixPath P0;              // n(K+1) square, acts on (x0, zbar)
  std::vector<MatrixPath> P;  // n(K+2) square, acts on (x_i, x0, zbar)
  MatrixPath Abar;            // nK x nK
  MatrixPath Gbar;            // nK x n
  VectorPath mbar;            // nK
  VectorPath s0;              // n(K+1)
  std::vector<VectorPath> s;  // n(K+2)
};

/// Mean-field coefficients implied by the minor Riccati blocks:
/// Abar row k = (A_k - M P_k,11) e_k + F^pi - M P_k,13, Gbar row k = G - M P_k,12.
void consistent_mean_field(const ValidatedModel& model, const std::vector<const Matrix*>& P, Matrix& Abar,
                           Matrix& Gbar);

/// mbar block k = -M s_k,1.
Vector consistent_offset(const ValidatedModel& model, const std::vector<const Vector*>& s);

/// Integrates the Riccati phase, then the linear offset phase, then fills in
/// the algebraic variables node by node. A Riccati escape means the system
/// has no solution on [0, T].
OrBlowUp<NceSolution> solve_nce(const ValidatedModel& model, const TimeGrid& grid);

struct ControlPair {
  Vector u0;
  Vector ui;
};

/// Feedback controls of the major player and of a minor player of type kappa
/// (1-based), with the paths linearly interpolated at t.
ControlPair nce_feedback(const NceSolution& sol, const ValidatedModel& model, double t, const Vector& x0,
                         const Vector& xi, const Vector& zbar, int kappa);

/// Node-sampled closed-loop law of the solution, for simulation.
ClosedLoopLaw nce_law(const NceSolution& sol, const ValidatedModel& model);

/// Forward RK4 integration of dZ = (Abar Z + Gbar X0 + mbar) dt with Z(0) = alpha0
/// stacked, driven by a major-state path sampled on the solution grid or on a
/// refinement of it.
VectorPath propagate_mean_field(const NceSolution& sol, const ValidatedModel& model, const VectorPath& x0_path);

}  // namespace mfg
