#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "stm/levy_driver.hpp"
#include "stm/spectral_model.hpp"

namespace stm {

/// Affine noise coefficient G(phi) = G1(phi) + G2 with
///   (G1(phi) u)_i = sum_{j,m} g1(i, j, m) phi_j u_m,   (G2 u)_i = sum_m g2(i, m) u_m.
/// g1 is stored as one N x N slice per noise mode m.
class AffineNoiseMap {
 public:
  AffineNoiseMap(std::vector<Eigen::MatrixXd> g1_slices, Eigen::MatrixXd g2);

  static AffineNoiseMap zero(int state_dim, int noise_dim);
  /// N = M = 1 with g1 = a, g2 = b.
  static AffineNoiseMap scalar(double a, double b);

  int state_dim() const noexcept { return static_cast<int>(g2_.rows()); }
  int noise_dim() const noexcept { return static_cast<int>(g2_.cols()); }

  double g1(int i, int j, int m) const { return g1_[static_cast<std::size_t>(m)](i, j); }
  double& g1(int i, int j, int m) { return g1_[static_cast<std::size_t>(m)](i, j); }
  const Eigen::MatrixXd& g1_slice(int m) const { return g1_[static_cast<std::size_t>(m)]; }
  const Eigen::MatrixXd& g2() const noexcept { return g2_; }

  /// N x M matrix of the linear part G1(phi).
  Eigen::MatrixXd g1_of(const Eigen::VectorXd& phi) const;
  /// N x M matrix G(phi) = G1(phi) + G2.
  Eigen::MatrixXd g_of(const Eigen::VectorXd& phi) const { return g1_of(phi) + g2_; }

  bool has_linear_part() const;

  /// Same map with G1 scaled by `factor` (G2 untouched).
  AffineNoiseMap with_g1_scaled(double factor) const;

 private:
  std::vector<Eigen::MatrixXd> g1_;
  Eigen::MatrixXd g2_;
};

/// G(state) applied to a noise increment.
Eigen::VectorXd g_apply(const AffineNoiseMap& gmap, const Eigen::VectorXd& state,
                        const Eigen::VectorXd& increment);

/// Operator norm of G1 from V into Hilbert-Schmidt operators on the
/// Cameron-Martin space: spectral norm of the (N M) x N matrix with entries
/// sqrt(gamma_m) g1(i, j, m) lambda_j^{-1/2}.
double g1_v_to_hs_norm(const AffineNoiseMap& gmap, const SpectralModel& model, const NoiseModel& noise);

/// Law of the initial value X0: a point mass, or Gaussian with given mean and covariance.
class InitialLaw {
 public:
  static InitialLaw deterministic(Eigen::VectorXd x0);
  static InitialLaw gaussian(Eigen::VectorXd mean, const Eigen::MatrixXd& covariance);

  const Eigen::VectorXd& mean() const noexcept { return mean_; }
  const Eigen::MatrixXd& covariance() const noexcept { return covariance_; }
  Eigen::MatrixXd second_moment() const { return covariance_ + mean_ * mean_.transpose(); }
  bool is_deterministic() const noexcept { return !factor_.has_value(); }

  Eigen::VectorXd sample(Rng& rng) const;

 private:
  InitialLaw(Eigen::VectorXd mean, Eigen::MatrixXd cov, std::optional<Eigen::MatrixXd> factor)
      : mean_(std::move(mean)), covariance_(std::move(cov)), factor_(std::move(factor)) {}

  Eigen::VectorXd mean_;
  Eigen::MatrixXd covariance_;
  std::optional<Eigen::MatrixXd> factor_;
};

/// Noise coefficient evaluated by the scheme: (state, increment) -> G(state) increment.
using NoiseCoefficient = std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>;

/// Exponential-Euler path of the mild solution on the uniform grid t_k = k T / steps:
///   X^{k+1} = S(dt) (X^k + G(X^k) dL_k).
/// G is evaluated at the left endpoint only. With `substeps` > 1 each grid
/// step is resolved by that many internal steps and only grid values are
/// returned. Result is (steps + 1) x N. When `increments` is non-null it
/// receives the (steps * substeps) x M driver increments used.
Eigen::MatrixXd simulate_path(const SpectralModel& model, const NoiseModel& noise,
                              const NoiseCoefficient& coefficient, const Eigen::VectorXd& x0,
                              int steps, Rng& rng, int substeps = 1,
                              Eigen::MatrixXd* increments = nullptr);

Eigen::MatrixXd simulate_path(const SpectralModel& model, const NoiseModel& noise,
                              const AffineNoiseMap& gmap, const Eigen::VectorXd& x0, int steps,
                              Rng& rng, int substeps = 1, Eigen::MatrixXd* increments = nullptr);

/// What each simulated path contributes to an ensemble.
enum class Observation {
  nodes,          ///< values at the steps + 1 grid nodes
  cell_averages,  ///< time averages over the `steps` grid cells (trapezoid on substeps)
};

struct SamplingPlan {
  int steps = 1;
  int substeps = 1;
  Observation observation = Observation::nodes;

  int points() const noexcept { return observation == Observation::nodes ? steps + 1 : steps; }
};

/// Flattened samples: row p holds path p, column k * N + n the n-th mode at time point k.
struct Ensemble {
  Eigen::MatrixXd samples;
  int state_dim = 0;
  SamplingPlan plan;
  double horizon = 1.0;
  std::uint64_t seed = 0;

  int paths() const noexcept { return static_cast<int>(samples.rows()); }
  int points() const noexcept { return plan.points(); }
};

/// Mean, two-time second moment and covariance over the ensemble's time
/// points, each with a batch-means standard error. Index (k, n) is stored at
/// k * N + n.
struct MomentEstimate {
  int points = 0;
  int state_dim = 0;
  int samples = 0;
  int batches = 0;
  Eigen::VectorXd mean;
  Eigen::VectorXd mean_se;
  Eigen::MatrixXd second_moment;
  Eigen::MatrixXd second_moment_se;
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd covariance_se;

  Eigen::Index index(int k, int n) const noexcept { return static_cast<Eigen::Index>(k) * state_dim + n; }
  double mean_at(int k, int n) const { return mean[index(k, n)]; }
  double second_at(int k, int n, int l, int m) const { return second_moment(index(k, n), index(l, m)); }
  double covariance_at(int k, int n, int l, int m) const { return covariance(index(k, n), index(l, m)); }

  /// Regularity diagnostic: sup over time points k of
  /// sqrt(sum_n lambda_n^r M[k,n,k,n]), the estimated L2(Omega; H^r) norm.
  double sup_scale_norm(const SpectralModel& model, double r) const;
};

/// Number of batch-means batches used for standard errors.
inline constexpr int kDefaultBatches = 32;

/// Streaming accumulator of per-batch sums. Paths must be fed batch by
/// batch in increasing batch order; point estimates use all samples, standard
/// errors the spread of the batch estimates.
class MomentAccumulator {
 public:
  MomentAccumulator(int points, int state_dim, int total_samples, int batches = kDefaultBatches);

  int batches() const noexcept { return batches_; }
  /// Half-open path index range [begin, end) of batch b.
  std::pair<int, int> batch_range(int b) const;

  /// Rows are the flattened samples of batch `next_batch()`.
  void add_batch(const Eigen::MatrixXd& rows);
  int next_batch() const noexcept { return next_; }

  MomentEstimate finish() const;

 private:
  int points_;
  int dim_;
  int total_;
  int batches_;
  int next_ = 0;
  Eigen::VectorXd sum_;
  Eigen::MatrixXd sum_outer_;
  Eigen::VectorXd batch_mean_sum_, batch_mean_sq_;
  Eigen::MatrixXd batch_m2_sum_, batch_m2_sq_;
  Eigen::MatrixXd batch_cov_sum_, batch_cov_sq_;
};

/// Sample moments of a stored ensemble. Throws InsufficientSamples if fewer than two paths.
MomentEstimate estimate_moments(const Ensemble& ensemble, int batches = kDefaultBatches);

struct SimulationSettings {
  int paths = 1000;
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Simulates `settings.paths` independent paths, path p driven by
/// make_stream(seed, p), and stores them.
Ensemble simulate_ensemble(const SpectralModel& model, const NoiseModel& noise,
                           const AffineNoiseMap& gmap, const InitialLaw& initial,
                           const SamplingPlan& plan, const SimulationSettings& settings);

/// Same sampling as simulate_ensemble, reduced batch by batch without keeping
/// the paths. Results are identical for any thread count.
MomentEstimate simulate_moments(const SpectralModel& model, const NoiseModel& noise,
                                const AffineNoiseMap& gmap, const InitialLaw& initial,
                                const SamplingPlan& plan, const SimulationSettings& settings,
                                int batches = kDefaultBatches);

/// Pathwise residual of the weak form of the mild solution,
///   <X, (-d/dt + A) v>_{L2(0,T;H)} - <X0, v(0)> - sum_k <v(t_k), G(X^k) dL_k>,
/// for a test function given by nodal values v ((K+1) x N, last row zero).
/// The space-time pairing uses the piecewise-linear interpolants of X and v.
/// `path` is (K+1) x N, `increments` K x M.
double weak_identity_residual(const Eigen::MatrixXd& path, const Eigen::MatrixXd& v,
                              const SpectralModel& model, const AffineNoiseMap& gmap,
                              const Eigen::MatrixXd& increments);

struct IsometryCheck {
  double lhs = 0.0;   ///< Monte Carlo mean of the product of the two weak integrals
  double rhs = 0.0;   ///< time quadrature of sum_m gamma_m <v1, Phi e_m><v2, Phi e_m>
  double se = 0.0;    ///< batch-means standard error of lhs
  double z_score = 0.0;
};

/// Weak Ito isometry for deterministic integrands on the grid t_k = k T / K:
/// v1, v2 are (K+1) x N nodal values, phi holds K matrices (N x M) at the left
/// endpoints t_0 .. t_{K-1}. Both sides use the left-point rule.
IsometryCheck ito_isometry_check(const NoiseModel& noise, const Eigen::MatrixXd& v1,
                                 const Eigen::MatrixXd& v2, const std::vector<Eigen::MatrixXd>& phi,
                                 double horizon, int samples, std::uint64_t seed,
                                 int batches = kDefaultBatches);

}  // namespace stm
