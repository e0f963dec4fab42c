#pragma once

#include <Eigen/Dense>

namespace stm {

/// Spectral Galerkin realization of a self-adjoint positive definite
/// operator A truncated to its first N eigenmodes, together with the time
/// horizon T of the evolution problem.
///
/// Coefficient vectors are expressed in the (abstract) orthonormal
/// eigenbasis of A, so A, its fractional powers and the semigroup
/// S(t) = exp(-tA) are all diagonal. Immutable after construction.
class SpectralModel {
 public:
  /// Eigenvalues must be strictly positive and sorted ascending; horizon
  /// must be positive and finite.
  SpectralModel(Eigen::VectorXd eigenvalues, double horizon);

  /// Dirichlet Laplacian on (0, length): lambda_n = (n pi / length)^2.
  static SpectralModel dirichlet_laplacian(int dim, double length, double horizon = 1.0);

  int dim() const noexcept { return static_cast<int>(eigenvalues_.size()); }
  const Eigen::VectorXd& eigenvalues() const noexcept { return eigenvalues_; }
  double eigenvalue(int mode) const;
  double horizon() const noexcept { return horizon_; }

  /// exp(-t A) applied to `coeffs`. Requires t >= 0.
  Eigen::VectorXd semigroup_apply(double t, const Eigen::VectorXd& coeffs) const;

  /// Norm of the scale space with exponent r in [-1, 1]:
  /// sqrt(sum_n lambda_n^r c_n^2). r = 0 is H, r = 1 is V, r = -1 is V*.
  double fractional_norm(double r, const Eigen::VectorXd& coeffs) const;

  /// int_0^upper lambda_n exp(-2 lambda_n t) dt for the zero-based `mode`,
  /// which never exceeds 1/2.
  double smoothing_integral(int mode, double upper) const;

 private:
  void check_length(const Eigen::VectorXd& coeffs) const;

  Eigen::VectorXd eigenvalues_;
  double horizon_;
};

}  // namespace stm
