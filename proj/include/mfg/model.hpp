#pragma once

#include <string>
#include <vector>

#include "mfg/types.hpp"

namespace mfg {

/// Constant coefficients of the major/minor LQ game.
///
/// Dynamics:
///   dX0 = (A0 X0 + B0 u0 + F0 X^(N)) dt + D0 dW0
///   dXi = (A[theta_i] Xi + B ui + F X^(N) + G X0) dt + D dWi
/// Running costs (discounted at rate rho, horizon T):
///   |X0 - Gamma0 X^(N) - eta0|^2_Q0 + |u0|^2_R0
///   |Xi - Gamma1 X0 - Gamma2 X^(N) - eta|^2_Q + |ui|^2_R
/// with terminal counterparts (Q0f, Gamma0f, eta0f) and (Qf, Gamma1f, Gamma2f, etaf).
struct ModelParams {
  int n = 0;   // state dimension
  int n1 = 0;  // control dimension
  int n2 = 0;  // noise dimension
  int K = 0;   // number of minor types

  Matrix A0, B0, F0, D0;
  std::vector<Matrix> A;  // one per type
  Matrix B, F, G, D;

  Matrix Q0, Q0f, Q, Qf;
  Matrix Gamma0, Gamma0f, Gamma1, Gamma1f, Gamma2, Gamma2f;
  Vector eta0, eta0f, eta, etaf;
  Matrix R0, R;

  double rho = 0.0;
  double T = 1.0;
  Vector pi;

  Vector alpha0;   // common mean of the minor initial states
  Vector x0_mean;  // mean of the major initial state
  Matrix cov0;     // major initial covariance
  Matrix cov;      // minor initial covariance

  /// All-zero model of the given shape with R0 = R = I, uniform pi, T = 1.
  static ModelParams zeros(int n, int n1, int n2, int K);
};

/// The pi-lifted block data shared by the limiting control problems.
struct PiLifted {
  Matrix F0pi, Gamma0pi, Gamma0fpi;  // n x nK
  Matrix Fpi, Gamma2pi, Gamma2fpi;   // n x nK
  Matrix Q0pi, Q0fpi;                // n(K+1) square
  Vector eta0pi, eta0fpi;            // n(K+1)
  Matrix Qpi, Qfpi;                  // n(K+2) square
  Vector etapi, etafpi;              // n(K+2)
  Matrix B0big;                      // n(K+1) x n1, [B0; 0]
  Matrix Bbig;                       // n(K+2) x n1, [B; 0]
};

/// A model whose invariants have been checked. Immutable; caches the inverse
/// control weights and the lifted blocks every solver needs.
class ValidatedModel {
 public:
  const ModelParams& params() const { return p_; }
  const PiLifted& lifted() const { return lifted_; }

  int n() const { return p_.n; }
  int K() const { return p_.K; }

  const Matrix& R0inv() const { return r0inv_; }
  const Matrix& Rinv() const { return rinv_; }
  /// B0 R0^{-1} B0^T
  const Matrix& M0() const { return m0_; }
  /// B R^{-1} B^T
  const Matrix& M() const { return m_; }

 private:
  friend ValidatedModel validate_model(ModelParams raw);
  explicit ValidatedModel(ModelParams p);

  ModelParams p_;
  PiLifted lifted_;
  Matrix r0inv_, rinv_, m0_, m_;
};

/// Checks every invariant and returns the immutable model. Weights whose
/// asymmetry is below 1e-12 are replaced by their symmetric part.
ValidatedModel validate_model(ModelParams raw);

PiLifted lift_pi(const ValidatedModel& model);

}  // namespace mfg
