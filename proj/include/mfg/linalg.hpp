#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>

#include "mfg/error.hpp"
#include "mfg/types.hpp"

namespace mfg {

/// Entrywise l1 norm, sum_{jk} |z_jk|.
template <typename Derived>
typename Derived::Scalar l1_norm(const Eigen::MatrixBase<Derived>& m) {
  return m.cwiseAbs().sum();
}

template <typename Derived>
typename Derived::Scalar max_asymmetry(const Eigen::MatrixBase<Derived>& m) {
  return (m - m.transpose()).cwiseAbs().maxCoeff();
}

template <typename Derived>
MatrixX<typename Derived::Scalar> symmetric_part(const Eigen::MatrixBase<Derived>& m) {
  return (m + m.transpose()) / typename Derived::Scalar(2);
}

template <typename Derived>
typename Derived::Scalar min_eigenvalue(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.rows() == 0) return Scalar(0);
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(symmetric_part(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

/// Row-oriented Kronecker product pi (x) W: the K blocks pi_k W laid side by
/// side, so an n x m weight becomes n x (mK).
template <typename DerivedPi, typename DerivedW>
MatrixX<typename DerivedW::Scalar> kron_row(const Eigen::MatrixBase<DerivedPi>& pi,
                                            const Eigen::MatrixBase<DerivedW>& w) {
  const Eigen::Index K = pi.size();
  MatrixX<typename DerivedW::Scalar> out(w.rows(), w.cols() * K);
  for (Eigen::Index k = 0; k < K; ++k) out.middleCols(k * w.cols(), w.cols()) = pi(k) * w;
  return out;
}

/// General Kronecker product a (x) b.
template <typename DerivedA, typename DerivedB>
MatrixX<typename DerivedB::Scalar> kron(const Eigen::MatrixBase<DerivedA>& a,
                                        const Eigen::MatrixBase<DerivedB>& b) {
  MatrixX<typename DerivedB::Scalar> out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// e_k = [0 ... I_n ... 0] (n x nK) with the identity in block k, 1 <= k <= K.
template <typename Scalar = double>
MatrixX<Scalar> block_selector(int k, int K, int n) {
  if (K < 1 || n < 1 || k < 1 || k > K)
    throw Error(ErrorKind::IndexOutOfRange,
                "block selector index " + std::to_string(k) + " outside 1.." + std::to_string(K));
  MatrixX<Scalar> e = MatrixX<Scalar>::Zero(n, n * K);
  e.middleCols((k - 1) * n, n).setIdentity();
  return e;
}

/// L^T W L.
template <typename DerivedL, typename DerivedW>
MatrixX<typename DerivedW::Scalar> congruence(const Eigen::MatrixBase<DerivedL>& l,
                                              const Eigen::MatrixBase<DerivedW>& w) {
  return l.transpose() * w * l;
}

/// rows x cols zero matrix with `block` placed at (row0, col0).
template <typename Derived>
MatrixX<typename Derived::Scalar> embed_block(const Eigen::MatrixBase<Derived>& block, int rows,
                                              int cols, int row0, int col0) {
  MatrixX<typename Derived::Scalar> out = MatrixX<typename Derived::Scalar>::Zero(rows, cols);
  out.block(row0, col0, block.rows(), block.cols()) = block;
  return out;
}

}  // namespace mfg
