#pragma once

#include <Eigen/Dense>

namespace stm {

/// Order-2 tensor over two finite-dimensional Hilbert spaces, stored as the
/// coefficient matrix of sum_k phi_k (x) psi_k in orthonormal bases.
struct Tensor2 {
  Eigen::MatrixXd entries;

  Tensor2() = default;
  explicit Tensor2(Eigen::MatrixXd m) : entries(std::move(m)) {}

  static Tensor2 outer(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
    return Tensor2(u * v.transpose());
  }

  Eigen::Index rows() const noexcept { return entries.rows(); }
  Eigen::Index cols() const noexcept { return entries.cols(); }
};

// On finite-dimensional Hilbert spaces the projective, injective and
// Hilbert tensor norms are the nuclear, spectral and Frobenius norms of the
// coefficient matrix. All three are computed from one SVD.

/// Sum of singular values.
double projective_norm(const Tensor2& x);

/// Largest singular value.
double injective_norm(const Tensor2& x);

/// Frobenius norm.
double hilbert_norm(const Tensor2& x);

/// (S (x) T) x = S * x * T^T.
Tensor2 operator_tensor_apply(const Eigen::MatrixXd& s, const Eigen::MatrixXd& t, const Tensor2& x);

/// Duality pairing between the injective and projective realizations
/// (Frobenius inner product).
double dual_pair(const Tensor2& x, const Tensor2& y);

/// U V^T from the thin SVD x = U Sigma V^T: a unit-injective-norm element
/// attaining projective_norm(x) = dual_pair(x, witness).
Tensor2 duality_witness(const Tensor2& x);

/// Largest singular value of an arbitrary matrix.
double spectral_norm(const Eigen::MatrixXd& a);

}  // namespace stm
