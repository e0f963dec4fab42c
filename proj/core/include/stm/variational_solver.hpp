#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stm/levy_driver.hpp"
#include "stm/monte_carlo.hpp"
#include "stm/spectral_model.hpp"

namespace stm {

// Space-time Petrov-Galerkin discretization of the parabolic bilinear form
//   B(u, v) = int_0^T <u(t), (-d/dt + A) v(t)> dt
// with trial space X = L2(0,T; V) and test space Y = L2(0,T; V) cap H1_{0,{T}}(0,T; V*).
//
// Trial functions: indicators chi_k of the cells I_k = (t_k, t_{k+1}], k = 0..K-1,
// times spectral modes. Test functions: continuous piecewise-linear hats phi_l
// at nodes t_0..t_{K-1} (phi_l(T) = 0 for all l), times spectral modes.
// Because A is diagonal, B never couples two spatial modes and every operator
// below factorizes mode by mode (or mode pair by mode pair on tensors).

/// Uniform partition of [0, T] into `steps` cells.
struct TimeGrid {
  int steps = 2;
  double horizon = 1.0;

  static TimeGrid uniform(int steps, double horizon);

  double dt() const noexcept { return horizon / steps; }
  double node(int k) const noexcept { return horizon * k / steps; }
};

/// Per-mode K x K matrices of the discrete form and of the trial / test norms.
class PerModeSystem {
 public:
  PerModeSystem(SpectralModel model, TimeGrid grid);

  const SpectralModel& model() const noexcept { return model_; }
  const TimeGrid& grid() const noexcept { return grid_; }
  int steps() const noexcept { return grid_.steps; }
  int modes() const noexcept { return model_.dim(); }

  /// B^{(n)}[k, l] = B(chi_k e_n, phi_l e_n) = phi_l(t_k) - phi_l(t_{k+1}) + lambda_n int_{I_k} phi_l.
  /// Upper bidiagonal.
  const Eigen::MatrixXd& form(int mode) const { return b_[static_cast<std::size_t>(mode)]; }
  /// Diagonal of the trial Gram in the X-norm: lambda_n dt.
  const Eigen::VectorXd& trial_gram(int mode) const { return gx_[static_cast<std::size_t>(mode)]; }
  /// Test Gram in the Y-norm: lambda_n (phi_l, phi_l') + lambda_n^{-1} (phi_l', phi_l'').
  const Eigen::MatrixXd& test_gram(int mode) const { return gy_[static_cast<std::size_t>(mode)]; }

  /// Solves B^{(n)T} x = r (coefficients of the trial function whose
  /// functional B(., phi_l) equals r_l).
  Eigen::VectorXd solve_transposed(int mode, const Eigen::VectorXd& r) const;

  /// ||u||_X for the trial function with coefficients c in mode n.
  double trial_norm(int mode, const Eigen::VectorXd& c) const;
  /// ||f||_{Y'} for a functional given by its values f_l = f(phi_l e_n).
  double test_dual_norm(int mode, const Eigen::VectorXd& f) const;

 private:
  SpectralModel model_;
  TimeGrid grid_;
  std::vector<Eigen::MatrixXd> b_;
  std::vector<Eigen::VectorXd> gx_;
  std::vector<Eigen::MatrixXd> gy_;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> gy_factor_;
};

/// Assembles all per-mode matrices. Throws InvalidArgument for K < 2 and
/// AssemblyError if a test Gram is not positive definite.
PerModeSystem assemble_per_mode(const SpectralModel& model, const TimeGrid& grid);

/// W[k, l1, l2] = int_{I_k} phi_{l1} phi_{l2} dt. Only hats k and k+1 live on
/// I_k, so each cell carries a 2 x 2 local block (1 x 1 on the last cell).
class TemporalWeights {
 public:
  explicit TemporalWeights(const TimeGrid& grid);

  int steps() const noexcept { return steps_; }
  double operator()(int k, int l1, int l2) const;

  /// Hats supported on cell k (the second entry is -1 on the last cell).
  std::array<int, 2> local_hats(int k) const noexcept { return {k, k + 1 < steps_ ? k + 1 : -1}; }
  /// int_{I_k} phi_a phi_b for local hats a, b in {0, 1}.
  double local(int a, int b) const noexcept { return a == b ? dt_ / 3.0 : dt_ / 6.0; }

 private:
  int steps_;
  double dt_;
};

TemporalWeights tdelta_assemble(const TimeGrid& grid);

/// Four-index array A[k, n, l, m] over (time index, mode) pairs, stored mode
/// major: entry (n * K + k, m * K + l). The K x K block for mode pair (n, m)
/// is contiguous.
class SpaceTimeArray {
 public:
  SpaceTimeArray() = default;
  SpaceTimeArray(int steps, int modes);

  int steps() const noexcept { return steps_; }
  int modes() const noexcept { return modes_; }

  double& at(int k, int n, int l, int m) { return data_(n * steps_ + k, m * steps_ + l); }
  double at(int k, int n, int l, int m) const { return data_(n * steps_ + k, m * steps_ + l); }

  auto block(int n, int m) { return data_.block(n * steps_, m * steps_, steps_, steps_); }
  auto block(int n, int m) const { return data_.block(n * steps_, m * steps_, steps_, steps_); }

  /// N x N matrix D_k[n, m] = A[k, n, k, m].
  Eigen::MatrixXd time_diagonal(int k) const;

  const Eigen::MatrixXd& data() const noexcept { return data_; }
  Eigen::MatrixXd& data() noexcept { return data_; }

  double max_abs() const { return data_.size() == 0 ? 0.0 : data_.cwiseAbs().maxCoeff(); }
  /// max |A[k,n,l,m] - A[l,m,k,n]|.
  double asymmetry() const { return (data_ - data_.transpose()).cwiseAbs().maxCoeff(); }

 private:
  int steps_ = 0;
  int modes_ = 0;
  Eigen::MatrixXd data_;
};

/// Test-side load F[l1, m1, l2, m2] = f(phi_{l1} e_{m1} (x) phi_{l2} e_{m2}).
class SpaceTimeLoad : public SpaceTimeArray {
 public:
  using SpaceTimeArray::SpaceTimeArray;
};

/// Trial coefficients U[k, n, l, m] of u(s, t) = sum U chi_k(s) e_n (x) chi_l(t) e_m.
class SpaceTimeMoment : public SpaceTimeArray {
 public:
  using SpaceTimeArray::SpaceTimeArray;
};

/// Mean problem B(m, v) = <E X0, v(0)>: per mode B^{(n)T} c = (E X0)_n delta_{l,0}.
/// Returns K x N trial coefficients (row k is the value on I_k).
Eigen::MatrixXd solve_mean(const PerModeSystem& system, const Eigen::VectorXd& x0_mean);

/// Load of the second-moment problem:
///   R_{0,0}(M0) + T_delta((G1(m) (x) G2) q) + T_delta((G2 (x) G1(m)) q) + T_delta((G2 (x) G2) q),
/// with the piecewise-constant discrete mean on each cell.
SpaceTimeLoad rhs_second_moment(const PerModeSystem& system, const NoiseModel& noise,
                                const AffineNoiseMap& gmap, const Eigen::MatrixXd& mean_coeffs,
                                const Eigen::MatrixXd& second_moment0);

/// Load of the covariance problem: R_{0,0}(Cov X0) + T_delta((G(m) (x) G(m)) q).
SpaceTimeLoad rhs_covariance(const PerModeSystem& system, const NoiseModel& noise,
                             const AffineNoiseMap& gmap, const Eigen::MatrixXd& mean_coeffs,
                             const Eigen::MatrixXd& covariance0);

/// T_delta((G1 (x) G1)(u) q) tested against hat pairs. Reads only the
/// time-diagonal blocks D_k of u, which are exact for piecewise-constant trial functions.
SpaceTimeLoad tdelta_load(const PerModeSystem& system, const NoiseModel& noise,
                          const AffineNoiseMap& gmap, const SpaceTimeMoment& u);

/// (B (x) B)(u) as a load: block (n, m) is B^{(n)T} U^{(n,m)} B^{(m)}.
SpaceTimeLoad apply_tensor_operator(const PerModeSystem& system, const SpaceTimeMoment& u);

/// Inverse of apply_tensor_operator: two triangular solves per mode pair.
SpaceTimeMoment solve_tensor_operator(const PerModeSystem& system, const SpaceTimeLoad& load,
                                      int threads = 1);

/// Coefficients of m (x) m for trial coefficients m (K x N).
SpaceTimeMoment mean_outer(const Eigen::MatrixXd& mean_coeffs);

struct PicardOptions {
  double tol = 1e-10;  ///< stop when max |u_{j+1} - u_j| <= tol * max |u_{j+1}|
  int max_iter = 200;
  int threads = 1;
};

struct PicardResult {
  SpaceTimeMoment solution;
  SpaceTimeLoad final_load;          ///< load used in the last linear solve
  std::vector<double> updates;       ///< max-norm update of every iteration
  int iterations = 0;
  double g1_norm = 0.0;              ///< ||G1||_{L(V; L2(H; H))}
  std::vector<std::string> warnings;

  /// updates[j + 1] / updates[j].
  std::vector<double> update_ratios() const;
};

/// Fixed-point iteration for B(u) - T_delta((G1 (x) G1)(u) q) = F:
///   (B (x) B) u_{j+1} = F + T_delta((G1 (x) G1)(u_j) q),  u_0 = 0.
/// With G1 = 0 the map is constant and one solve is returned. Throws
/// NonConvergence (carrying the update trace) after max_iter iterations.
PicardResult picard_solve_second_moment(const PerModeSystem& system, const NoiseModel& noise,
                                        const AffineNoiseMap& gmap, const SpaceTimeLoad& load,
                                        const PicardOptions& options = {});

/// Same operator, covariance load.
PicardResult solve_covariance(const PerModeSystem& system, const NoiseModel& noise,
                              const AffineNoiseMap& gmap, const SpaceTimeLoad& load,
                              const PicardOptions& options = {});

struct InfSupReport {
  Eigen::VectorXd per_mode_min;  ///< smallest singular value per mode
  Eigen::VectorXd per_mode_max;  ///< largest singular value per mode
  double global_min = 0.0;
};

/// Discrete inf-sup constant of B in the X / Y norms: per mode the singular
/// values of Gy^{-1/2} B^T Gx^{-1/2}, minimized over modes.
InfSupReport discrete_inf_sup(const PerModeSystem& system);

}  // namespace stm
