#include "mfg/model.hpp"

#include <cmath>
#include <sstream>

#include "mfg/linalg.hpp"

namespace mfg {

namespace {

constexpr double kSymmetryRepairTol = 1e-12;
constexpr double kPiSumTol = 1e-12;

std::string shape_str(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

void expect_shape(const Matrix& m, int rows, int cols, const std::string& name) {
  if (m.rows() != rows || m.cols() != cols)
    throw Error(ErrorKind::DimensionMismatch,
                name + " is " + shape_str(m.rows(), m.cols()) + ", expected " + shape_str(rows, cols));
  if (!m.allFinite()) throw Error(ErrorKind::InvalidArgument, name + " has non-finite entries");
}

void expect_size(const Vector& v, int size, const std::string& name) {
  if (v.size() != size)
    throw Error(ErrorKind::DimensionMismatch,
                name + " has length " + std::to_string(v.size()) + ", expected " + std::to_string(size));
  if (!v.allFinite()) throw Error(ErrorKind::InvalidArgument, name + " has non-finite entries");
}

// Repairs tiny asymmetry in place; returns false if the asymmetry is real.
bool repair_symmetry(Matrix& w) {
  const double asym = max_asymmetry(w);
  if (asym > kSymmetryRepairTol) return false;
  w = symmetric_part(w);
  return true;
}

void expect_psd(Matrix& w, const std::string& name) {
  if (!repair_symmetry(w))
    throw Error(ErrorKind::NotPSD, name + " is not symmetric (asymmetry " +
                                       std::to_string(max_asymmetry(w)) + ")");
  const double lam = min_eigenvalue(w);
  const double scale = 1.0 + w.cwiseAbs().maxCoeff();
  if (lam < -1e-12 * scale) {
    std::ostringstream os;
    os << name << " has negative eigenvalue " << lam;
    throw Error(ErrorKind::NotPSD, os.str());
  }
}

void expect_pd(Matrix& w, const std::string& name) {
  if (!repair_symmetry(w))
    throw Error(ErrorKind::NotPD, name + " is not symmetric");
  Eigen::LLT<Matrix> llt(w);
  const double lam = min_eigenvalue(w);
  if (llt.info() != Eigen::Success || !(lam > 0.0)) {
    std::ostringstream os;
    os << name << " is not positive definite (smallest eigenvalue " << lam << ")";
    throw Error(ErrorKind::NotPD, os.str());
  }
}

PiLifted lift(const ModelParams& p) {
  const int n = p.n;
  const int K = p.K;
  const int nK = n * K;
  PiLifted l;
  l.F0pi = kron_row(p.pi, p.F0);
  l.Gamma0pi = kron_row(p.pi, p.Gamma0);
  l.Gamma0fpi = kron_row(p.pi, p.Gamma0f);
  l.Fpi = kron_row(p.pi, p.F);
  l.Gamma2pi = kron_row(p.pi, p.Gamma2);
  l.Gamma2fpi = kron_row(p.pi, p.Gamma2f);

  // [I, -Gamma0^pi]
  Matrix sel0(n, n + nK);
  sel0 << Matrix::Identity(n, n), -l.Gamma0pi;
  Matrix sel0f(n, n + nK);
  sel0f << Matrix::Identity(n, n), -l.Gamma0fpi;
  l.Q0pi = symmetric_part(congruence(sel0, p.Q0));
  l.Q0fpi = symmetric_part(congruence(sel0f, p.Q0f));
  l.eta0pi = sel0.transpose() * p.Q0 * p.eta0;
  l.eta0fpi = sel0f.transpose() * p.Q0f * p.eta0f;

  // [I, -Gamma1, -Gamma2^pi]
  Matrix sel(n, 2 * n + nK);
  sel << Matrix::Identity(n, n), -p.Gamma1, -l.Gamma2pi;
  Matrix self(n, 2 * n + nK);
  self << Matrix::Identity(n, n), -p.Gamma1f, -l.Gamma2fpi;
  l.Qpi = symmetric_part(congruence(sel, p.Q));
  l.Qfpi = symmetric_part(congruence(self, p.Qf));
  l.etapi = sel.transpose() * p.Q * p.eta;
  l.etafpi = self.transpose() * p.Qf * p.etaf;

  l.B0big = Matrix::Zero(n + nK, p.n1);
  l.B0big.topRows(n) = p.B0;
  l.Bbig = Matrix::Zero(2 * n + nK, p.n1);
  l.Bbig.topRows(n) = p.B;
  return l;
}

}  // namespace

ModelParams ModelParams::zeros(int n, int n1, int n2, int K) {
  ModelParams p;
  p.n = n;
  p.n1 = n1;
  p.n2 = n2;
  p.K = K;
  const Matrix Z = Matrix::Zero(n, n);
  p.A0 = Z;
  p.B0 = Matrix::Zero(n, n1);
  p.F0 = Z;
  p.D0 = Matrix::Zero(n, n2);
  p.A.assign(static_cast<std::size_t>(K), Z);
  p.B = Matrix::Zero(n, n1);
  p.F = Z;
  p.G = Z;
  p.D = Matrix::Zero(n, n2);
  p.Q0 = p.Q0f = p.Q = p.Qf = Z;
  p.Gamma0 = p.Gamma0f = p.Gamma1 = p.Gamma1f = p.Gamma2 = p.Gamma2f = Z;
  p.eta0 = p.eta0f = p.eta = p.etaf = Vector::Zero(n);
  p.R0 = Matrix::Identity(n1, n1);
  p.R = Matrix::Identity(n1, n1);
  p.pi = Vector::Constant(K, 1.0 / K);
  p.alpha0 = Vector::Zero(n);
  p.x0_mean = Vector::Zero(n);
  p.cov0 = Z;
  p.cov = Z;
  return p;
}

ValidatedModel::ValidatedModel(ModelParams p) : p_(std::move(p)) {
  lifted_ = lift(p_);
  r0inv_ = p_.R0.llt().solve(Matrix::Identity(p_.n1, p_.n1));
  rinv_ = p_.R.llt().solve(Matrix::Identity(p_.n1, p_.n1));
  r0inv_ = symmetric_part(r0inv_);
  rinv_ = symmetric_part(rinv_);
  m0_ = symmetric_part(p_.B0 * r0inv_ * p_.B0.transpose());
  m_ = symmetric_part(p_.B * rinv_ * p_.B.transpose());
}

ValidatedModel validate_model(ModelParams p) {
  if (p.n < 1 || p.n1 < 1 || p.n2 < 1 || p.K < 1)
    throw Error(ErrorKind::DimensionMismatch, "dimensions n, n1, n2, K must all be >= 1");
  const int n = p.n, n1 = p.n1, n2 = p.n2, K = p.K;

  expect_shape(p.A0, n, n, "A0");
  expect_shape(p.B0, n, n1, "B0");
  expect_shape(p.F0, n, n, "F0");
  expect_shape(p.D0, n, n2, "D0");
  if (static_cast<int>(p.A.size()) != K)
    throw Error(ErrorKind::DimensionMismatch,
                "expected " + std::to_string(K) + " type matrices A_k, got " + std::to_string(p.A.size()));
  for (int k = 0; k < K; ++k) expect_shape(p.A[static_cast<std::size_t>(k)], n, n, "A_" + std::to_string(k + 1));
  expect_shape(p.B, n, n1, "B");
  expect_shape(p.F, n, n, "F");
  expect_shape(p.G, n, n, "G");
  expect_shape(p.D, n, n2, "D");
  expect_shape(p.Q0, n, n, "Q0");
  expect_shape(p.Q0f, n, n, "Q0f");
  expect_shape(p.Q, n, n, "Q");
  expect_shape(p.Qf, n, n, "Qf");
  expect_shape(p.Gamma0, n, n, "Gamma0");
  expect_shape(p.Gamma0f, n, n, "Gamma0f");
  expect_shape(p.Gamma1, n, n, "Gamma1");
  expect_shape(p.Gamma1f, n, n, "Gamma1f");
  expect_shape(p.Gamma2, n, n, "Gamma2");
  expect_shape(p.Gamma2f, n, n, "Gamma2f");
  expect_shape(p.R0, n1, n1, "R0");
  expect_shape(p.R, n1, n1, "R");
  expect_shape(p.cov0, n, n, "cov0");
  expect_shape(p.cov, n, n, "cov");
  expect_size(p.eta0, n, "eta0");
  expect_size(p.eta0f, n, "eta0f");
  expect_size(p.eta, n, "eta");
  expect_size(p.etaf, n, "etaf");
  expect_size(p.alpha0, n, "alpha0");
  expect_size(p.x0_mean, n, "x0_mean");
  expect_size(p.pi, K, "pi");

  if (!(p.T > 0.0) || !std::isfinite(p.T)) throw Error(ErrorKind::InvalidArgument, "T must be positive");
  if (!(p.rho >= 0.0) || !std::isfinite(p.rho))
    throw Error(ErrorKind::InvalidArgument, "rho must be non-negative");

  for (int k = 0; k < K; ++k) {
    if (!(p.pi(k) > 0.0))
      throw Error(ErrorKind::BadPi, "pi_" + std::to_string(k + 1) + " = " + std::to_string(p.pi(k)) +
                                        " is not strictly positive");
  }
  if (std::abs(p.pi.sum() - 1.0) > kPiSumTol) {
    std::ostringstream os;
    os.precision(17);
    os << "pi sums to " << p.pi.sum() << ", not 1";
    throw Error(ErrorKind::BadPi, os.str());
  }

  expect_psd(p.Q0, "Q0");
  expect_psd(p.Q0f, "Q0f");
  expect_psd(p.Q, "Q");
  expect_psd(p.Qf, "Qf");
  expect_psd(p.cov0, "cov0");
  expect_psd(p.cov, "cov");
  expect_pd(p.R0, "R0");
  expect_pd(p.R, "R");

  return ValidatedModel(std::move(p));
}

PiLifted lift_pi(const ValidatedModel& model) { return lift(model.params()); }

}  // namespace mfg
