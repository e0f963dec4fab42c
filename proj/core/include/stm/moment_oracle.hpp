#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "stm/levy_driver.hpp"
#include "stm/monte_carlo.hpp"
#include "stm/spectral_model.hpp"

namespace stm {

// Reference computations of the first two moments of the mild solution that
// do not go through the space-time variational formulation: the exact mean
// and a matrix ODE (differential Lyapunov equation) for M(t) = E[X(t) (x) X(t)].

/// Moments on the uniform grid t_k = k T / K.
struct MomentField {
  std::vector<double> times;              ///< K + 1 nodes
  Eigen::MatrixXd mean;                   ///< (K+1) x N
  std::vector<Eigen::MatrixXd> diagonal;  ///< M(t_k), N x N each
  /// E[X(t_k) (x) X(t_l)] with index (k, n) at k * N + n, filled by two_time_extend.
  std::optional<Eigen::MatrixXd> two_time;

  int steps() const noexcept { return static_cast<int>(times.size()) - 1; }
  int state_dim() const noexcept { return static_cast<int>(mean.cols()); }
};

/// m(t_k) = S(t_k) E[X0] on K steps; (K+1) x N.
Eigen::MatrixXd mean_exact(const SpectralModel& model, const Eigen::VectorXd& x0_mean, int steps);

/// Spatial matrix of (G(m + .) (x) G(m + .)) q evaluated on the second moment:
///   Phi = sum_m gamma_m [ G1_m M G1_m^T + (G1_m mv) g2_m^T + g2_m (G1_m mv)^T + g2_m g2_m^T ],
/// where G1_m is the g1 slice of noise mode m and g2_m the m-th column of g2.
Eigen::MatrixXd noise_quadratic_form(const AffineNoiseMap& gmap, const NoiseModel& noise,
                                     const Eigen::MatrixXd& second_moment, const Eigen::VectorXd& mean);

/// Only the G1 (x) G1 part: sum_m gamma_m G1_m M G1_m^T.
Eigen::MatrixXd noise_quadratic_linear_part(const AffineNoiseMap& gmap, const NoiseModel& noise,
                                            const Eigen::MatrixXd& second_moment);

/// Integrates M' = -(Lambda M + M Lambda) + Phi(M, m(t)) with classical RK4,
/// `substeps` (>= 4) per grid step, m(t) evaluated exactly at every stage.
/// Throws InvalidArgument for a non-symmetric M0.
MomentField lyapunov_solve(const SpectralModel& model, const NoiseModel& noise,
                           const AffineNoiseMap& gmap, const Eigen::VectorXd& m0,
                           const Eigen::MatrixXd& second_moment0, int steps, int substeps = 8);

/// Fills `two_time`: for t_l >= t_k, E[X(t_k)_n X(t_l)_m] = exp(-lambda_m (t_l - t_k)) M(t_k)_{nm};
/// the lower half follows by symmetry.
MomentField two_time_extend(const SpectralModel& model, MomentField field);

}  // namespace stm
