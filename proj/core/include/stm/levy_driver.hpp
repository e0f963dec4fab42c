#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

#include "stm/tensor_core.hpp"

namespace stm {

using Rng = std::mt19937_64;

/// Independent, reproducible RNG stream `stream` derived from `seed`.
Rng make_stream(std::uint64_t seed, std::uint64_t stream);

/// Square-integrable zero-mean Levy driver on a truncation of U with
/// covariance Q = diag(gamma) in the eigenbasis e_m.
///
/// The driver is realized as a Q-Wiener part carrying the share
/// `wiener_fraction` of each gamma_m plus a compensated compound Poisson part
/// with intensity `jump_rate` carrying the rest. Jumps hit mode m with
/// probability gamma_m / tr Q and have symmetric size +-s,
/// s^2 = (1 - rho) tr Q / nu, so the jump covariance is (1 - rho) Q and no
/// compensator drift is needed.
class NoiseModel {
 public:
  NoiseModel(Eigen::VectorXd q_eigenvalues, double wiener_fraction, double jump_rate);

  /// Pure Q-Wiener driver.
  static NoiseModel wiener(Eigen::VectorXd q_eigenvalues) {
    return NoiseModel(std::move(q_eigenvalues), 1.0, 0.0);
  }

  int dim() const noexcept { return static_cast<int>(gamma_.size()); }
  const Eigen::VectorXd& q_eigenvalues() const noexcept { return gamma_; }
  double wiener_fraction() const noexcept { return rho_; }
  double jump_rate() const noexcept { return nu_; }
  double trace() const noexcept { return trace_; }

  /// Size s of a single jump (0 when there is no jump part).
  double jump_size() const noexcept { return jump_size_; }

  /// Kernel q = sum_m gamma_m e_m (x) e_m.
  Tensor2 covariance_kernel() const;

  /// Q^{1/2} x.
  Eigen::VectorXd q_sqrt_apply(const Eigen::VectorXd& x) const;

  /// Pseudo-inverse Q^{-1/2} x; null modes are mapped to zero.
  Eigen::VectorXd q_pinv_sqrt_apply(const Eigen::VectorXd& x) const;

  /// Hilbert-Schmidt norm of b (N x M) restricted to the Cameron-Martin space
  /// Q^{1/2} U: sqrt(sum_m gamma_m |b e_m|^2).
  double hs_norm_on_cameron_martin(const Eigen::MatrixXd& b) const;

  /// One increment L(t + dt) - L(t). Requires dt > 0.
  Eigen::VectorXd sample_increment(double dt, Rng& rng) const;
  /// Allocation-free variant writing into `out` (length M).
  void sample_increment(double dt, Rng& rng, Eigen::Ref<Eigen::VectorXd> out) const;

  /// Path values L(t_0 = 0), L(t_1), ..., L(t_steps) on a uniform grid
  /// of spacing dt; returned as (steps + 1) x M.
  Eigen::MatrixXd sample_path(double dt, int steps, Rng& rng) const;

 private:
  void check_length(const Eigen::VectorXd& x) const;

  Eigen::VectorXd gamma_;
  double rho_;
  double nu_;
  double trace_ = 0.0;
  double jump_size_ = 0.0;
  std::discrete_distribution<int>::param_type jump_mode_;
};

}  // namespace stm
