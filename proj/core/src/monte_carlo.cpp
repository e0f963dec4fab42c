#include "stm/monte_carlo.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "parallel.hpp"
#include "stm/error.hpp"
#include "stm/tensor_core.hpp"

namespace stm {

// ---------------------------------------------------------------------------
// AffineNoiseMap

AffineNoiseMap::AffineNoiseMap(std::vector<Eigen::MatrixXd> g1_slices, Eigen::MatrixXd g2)
    : g1_(std::move(g1_slices)), g2_(std::move(g2)) {
  const auto n = g2_.rows();
  const auto m = g2_.cols();
  if (n < 1 || m < 1) throw InvalidArgument("AffineNoiseMap: g2 must be non-empty");
  if (static_cast<Eigen::Index>(g1_.size()) != m) {
    throw InvalidArgument("AffineNoiseMap: expected " + std::to_string(m) + " g1 slices, got " +
                          std::to_string(g1_.size()));
  }
  for (const auto& slice : g1_) {
    if (slice.rows() != n || slice.cols() != n) {
      throw InvalidArgument("AffineNoiseMap: every g1 slice must be " + std::to_string(n) + "x" +
                            std::to_string(n));
    }
    if (!slice.allFinite()) throw InvalidArgument("AffineNoiseMap: g1 has non-finite entries");
  }
  if (!g2_.allFinite()) throw InvalidArgument("AffineNoiseMap: g2 has non-finite entries");
}

AffineNoiseMap AffineNoiseMap::zero(int state_dim, int noise_dim) {
  if (state_dim < 1 || noise_dim < 1) throw InvalidArgument("AffineNoiseMap::zero: dims must be >= 1");
  return AffineNoiseMap(std::vector<Eigen::MatrixXd>(static_cast<std::size_t>(noise_dim),
                                                     Eigen::MatrixXd::Zero(state_dim, state_dim)),
                        Eigen::MatrixXd::Zero(state_dim, noise_dim));
}

AffineNoiseMap AffineNoiseMap::scalar(double a, double b) {
  return AffineNoiseMap({Eigen::MatrixXd::Constant(1, 1, a)}, Eigen::MatrixXd::Constant(1, 1, b));
}

Eigen::MatrixXd AffineNoiseMap::g1_of(const Eigen::VectorXd& phi) const {
  if (phi.size() != state_dim()) throw InvalidArgument("AffineNoiseMap: state has wrong length");
  Eigen::MatrixXd out(state_dim(), noise_dim());
  for (int m = 0; m < noise_dim(); ++m) out.col(m) = g1_slice(m) * phi;
  return out;
}

bool AffineNoiseMap::has_linear_part() const {
  for (const auto& slice : g1_) {
    if (!slice.isZero(0.0)) return true;
  }
  return false;
}

AffineNoiseMap AffineNoiseMap::with_g1_scaled(double factor) const {
  auto slices = g1_;
  for (auto& s : slices) s *= factor;
  return AffineNoiseMap(std::move(slices), g2_);
}

Eigen::VectorXd g_apply(const AffineNoiseMap& gmap, const Eigen::VectorXd& state,
                        const Eigen::VectorXd& increment) {
  if (state.size() != gmap.state_dim() || increment.size() != gmap.noise_dim()) {
    throw InvalidArgument("g_apply: state or increment has wrong length");
  }
  Eigen::VectorXd out = gmap.g2() * increment;
  for (int m = 0; m < gmap.noise_dim(); ++m) out.noalias() += increment[m] * (gmap.g1_slice(m) * state);
  return out;
}

double g1_v_to_hs_norm(const AffineNoiseMap& gmap, const SpectralModel& model, const NoiseModel& noise) {
  const int n = gmap.state_dim();
  const int m_dim = gmap.noise_dim();
  if (model.dim() != n || noise.dim() != m_dim) {
    throw InvalidArgument("g1_v_to_hs_norm: dimensions of model, noise and G disagree");
  }
  Eigen::MatrixXd op(n * m_dim, n);
  const Eigen::VectorXd inv_sqrt_lam = model.eigenvalues().array().rsqrt();
  for (int i = 0; i < n; ++i) {
    for (int m = 0; m < m_dim; ++m) {
      const double w = std::sqrt(noise.q_eigenvalues()[m]);
      for (int j = 0; j < n; ++j) op(i * m_dim + m, j) = w * gmap.g1(i, j, m) * inv_sqrt_lam[j];
    }
  }
  return spectral_norm(op);
}

// ---------------------------------------------------------------------------
// InitialLaw

InitialLaw InitialLaw::deterministic(Eigen::VectorXd x0) {
  if (!x0.allFinite()) throw InvalidArgument("InitialLaw: initial value must be finite");
  const auto n = x0.size();
  return InitialLaw(std::move(x0), Eigen::MatrixXd::Zero(n, n), std::nullopt);
}

InitialLaw InitialLaw::gaussian(Eigen::VectorXd mean, const Eigen::MatrixXd& covariance) {
  const auto n = mean.size();
  if (covariance.rows() != n || covariance.cols() != n) {
    throw InvalidArgument("InitialLaw: covariance must be square with the mean's dimension");
  }
  if (!covariance.isApprox(covariance.transpose(), 1e-12)) {
    throw InvalidArgument("InitialLaw: covariance must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(covariance);
  if (eig.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff())) {
    throw InvalidArgument("InitialLaw: covariance must be positive semidefinite");
  }
  Eigen::MatrixXd factor =
      eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  return InitialLaw(std::move(mean), covariance, std::move(factor));
}

Eigen::VectorXd InitialLaw::sample(Rng& rng) const {
  if (!factor_) return mean_;
  std::normal_distribution<double> normal;
  Eigen::VectorXd xi(mean_.size());
  for (Eigen::Index i = 0; i < xi.size(); ++i) xi[i] = normal(rng);
  return mean_ + *factor_ * xi;
}

// ---------------------------------------------------------------------------
// Path simulation

namespace {

struct AffineStep {
  const AffineNoiseMap& gmap;
  Eigen::VectorXd work;

  explicit AffineStep(const AffineNoiseMap& g) : gmap(g), work(g.state_dim()) {}

  // x <- x + G(x) dL, evaluated entirely from the incoming (left endpoint) x.
  void add_noise(Eigen::VectorXd& x, const Eigen::VectorXd& dl) {
    work.noalias() = gmap.g2() * dl;
    for (int m = 0; m < gmap.noise_dim(); ++m) work.noalias() += dl[m] * (gmap.g1_slice(m) * x);
    x += work;
  }
};

struct CallbackStep {
  const NoiseCoefficient& coefficient;

  void add_noise(Eigen::VectorXd& x, const Eigen::VectorXd& dl) {
    const Eigen::VectorXd g = coefficient(x, dl);
    if (g.size() != x.size()) throw InvalidArgument("simulate_path: coefficient returned wrong length");
    x += g;
  }
};

// Exponential-Euler integration with observation callback. `observe(k, x)`
// is invoked at every internal node k = 0 .. steps * substeps.
template <typename Step, typename Observe>
void integrate(const SpectralModel& model, const NoiseModel& noise, Step& step,
               const Eigen::VectorXd& x0, int steps, int substeps, Rng& rng,
               Eigen::MatrixXd* increments, Observe&& observe) {
  if (steps < 1) throw InvalidArgument("simulate_path: steps must be >= 1");
  if (substeps < 1) throw InvalidArgument("simulate_path: substeps must be >= 1");
  if (x0.size() != model.dim()) throw InvalidArgument("simulate_path: x0 has wrong length");
  if (!x0.allFinite()) throw InvalidArgument("simulate_path: x0 must be finite");
  const int total = steps * substeps;
  const double h = model.horizon() / total;
  const Eigen::ArrayXd decay = (-h * model.eigenvalues().array()).exp();
  if (increments != nullptr) increments->resize(total, noise.dim());

  Eigen::VectorXd x = x0;
  Eigen::VectorXd dl(noise.dim());
  observe(0, x);
  for (int j = 0; j < total; ++j) {
    noise.sample_increment(h, rng, dl);
    if (increments != nullptr) increments->row(j) = dl.transpose();
    step.add_noise(x, dl);
    x.array() *= decay;
    observe(j + 1, x);
  }
}

void check_dims(const SpectralModel& model, const NoiseModel& noise, const AffineNoiseMap& gmap) {
  if (gmap.state_dim() != model.dim() || gmap.noise_dim() != noise.dim()) {
    throw InvalidArgument("dimension mismatch: model N=" + std::to_string(model.dim()) +
                          ", noise M=" + std::to_string(noise.dim()) + ", G is " +
                          std::to_string(gmap.state_dim()) + "x" + std::to_string(gmap.noise_dim()));
  }
}

// Flattened observation of one path according to `plan`.
void observe_path(const SpectralModel& model, const NoiseModel& noise, const AffineNoiseMap& gmap,
                  const Eigen::VectorXd& x0, const SamplingPlan& plan, Rng& rng,
                  Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> out) {
  const int n = model.dim();
  const int sub = plan.substeps;
  AffineStep step(gmap);
  if (plan.observation == Observation::nodes) {
    integrate(model, noise, step, x0, plan.steps, sub, rng, nullptr,
              [&](int j, const Eigen::VectorXd& x) {
                if (j % sub == 0) out.segment((j / sub) * n, n) = x.transpose();
              });
    return;
  }
  // Trapezoid rule on the internal nodes of each cell, normalized by the cell length.
  out.setZero();
  const double w = 1.0 / sub;
  integrate(model, noise, step, x0, plan.steps, sub, rng, nullptr,
            [&](int j, const Eigen::VectorXd& x) {
              const int cell_right = (j - 1) / sub;  // cell ending at or after node j
              const bool boundary = (j % sub == 0);
              if (j > 0) out.segment(cell_right * n, n) += (boundary ? 0.5 * w : w) * x.transpose();
              if (boundary && j / sub < plan.steps) {
                out.segment((j / sub) * n, n) += 0.5 * w * x.transpose();
              }
            });
}

void check_plan(const SamplingPlan& plan) {
  if (plan.steps < 1) throw InvalidArgument("SamplingPlan: steps must be >= 1");
  if (plan.substeps < 1) throw InvalidArgument("SamplingPlan: substeps must be >= 1");
}

}  // namespace

Eigen::MatrixXd simulate_path(const SpectralModel& model, const NoiseModel& noise,
                              const NoiseCoefficient& coefficient, const Eigen::VectorXd& x0,
                              int steps, Rng& rng, int substeps, Eigen::MatrixXd* increments) {
  CallbackStep step{coefficient};
  Eigen::MatrixXd out(std::max(steps, 0) + 1, model.dim());
  integrate(model, noise, step, x0, steps, substeps, rng, increments,
            [&](int j, const Eigen::VectorXd& x) {
              if (j % substeps == 0) out.row(j / substeps) = x.transpose();
            });
  return out;
}

Eigen::MatrixXd simulate_path(const SpectralModel& model, const NoiseModel& noise,
                              const AffineNoiseMap& gmap, const Eigen::VectorXd& x0, int steps,
                              Rng& rng, int substeps, Eigen::MatrixXd* increments) {
  check_dims(model, noise, gmap);
  AffineStep step(gmap);
  Eigen::MatrixXd out(std::max(steps, 0) + 1, model.dim());
  integrate(model, noise, step, x0, steps, substeps, rng, increments,
            [&](int j, const Eigen::VectorXd& x) {
              if (j % substeps == 0) out.row(j / substeps) = x.transpose();
            });
  return out;
}

// ---------------------------------------------------------------------------
// Moment estimation

namespace {

// Welford update of a running mean / sum of squared deviations.
template <typename A, typename B, typename C>
void welford(A& mean, B& m2, const C& value, int count) {
  const auto delta = (value - mean).eval();
  mean += delta / static_cast<double>(count);
  m2.array() += delta.array() * (value - mean).array();
}

Eigen::MatrixXd symmetric_gram(const Eigen::MatrixXd& rows) {
  const auto d = rows.cols();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(d, d);
  g.selfadjointView<Eigen::Lower>().rankUpdate(rows.transpose());
  g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
  return g;
}

}  // namespace

MomentAccumulator::MomentAccumulator(int points, int state_dim, int total_samples, int batches)
    : points_(points), dim_(state_dim), total_(total_samples) {
  if (total_samples < 2) {
    throw InsufficientSamples("moment estimation needs at least 2 samples, got " +
                              std::to_string(total_samples));
  }
  if (points < 1 || state_dim < 1) throw InvalidArgument("MomentAccumulator: empty shape");
  if (batches < 2) throw InvalidArgument("MomentAccumulator: at least 2 batches are required");
  batches_ = std::min(batches, total_samples);
  const Eigen::Index d = static_cast<Eigen::Index>(points) * state_dim;
  sum_ = Eigen::VectorXd::Zero(d);
  sum_outer_ = Eigen::MatrixXd::Zero(d, d);
  batch_mean_sum_ = Eigen::VectorXd::Zero(d);
  batch_mean_sq_ = Eigen::VectorXd::Zero(d);
  batch_m2_sum_ = Eigen::MatrixXd::Zero(d, d);
  batch_m2_sq_ = Eigen::MatrixXd::Zero(d, d);
  batch_cov_sum_ = Eigen::MatrixXd::Zero(d, d);
  batch_cov_sq_ = Eigen::MatrixXd::Zero(d, d);
}

std::pair<int, int> MomentAccumulator::batch_range(int b) const {
  const auto begin = static_cast<long long>(b) * total_ / batches_;
  const auto end = static_cast<long long>(b + 1) * total_ / batches_;
  return {static_cast<int>(begin), static_cast<int>(end)};
}

void MomentAccumulator::add_batch(const Eigen::MatrixXd& rows) {
  if (next_ >= batches_) throw InvalidArgument("MomentAccumulator: all batches already added");
  const auto [begin, end] = batch_range(next_);
  if (rows.rows() != end - begin || rows.cols() != sum_.size()) {
    throw InvalidArgument("MomentAccumulator: batch " + std::to_string(next_) + " expects " +
                          std::to_string(end - begin) + " rows of width " + std::to_string(sum_.size()));
  }
  const Eigen::VectorXd colsum = rows.colwise().sum().transpose();
  const Eigen::MatrixXd outer = symmetric_gram(rows);
  sum_ += colsum;
  sum_outer_ += outer;

  const double nb = static_cast<double>(rows.rows());
  const Eigen::VectorXd mu = colsum / nb;
  const Eigen::MatrixXd m2 = outer / nb;
  const Eigen::MatrixXd cov = m2 - mu * mu.transpose();
  ++next_;
  welford(batch_mean_sum_, batch_mean_sq_, mu, next_);
  welford(batch_m2_sum_, batch_m2_sq_, m2, next_);
  welford(batch_cov_sum_, batch_cov_sq_, cov, next_);
}

MomentEstimate MomentAccumulator::finish() const {
  if (next_ != batches_) {
    throw InvalidArgument("MomentAccumulator: only " + std::to_string(next_) + " of " +
                          std::to_string(batches_) + " batches were added");
  }
  MomentEstimate est;
  est.points = points_;
  est.state_dim = dim_;
  est.samples = total_;
  est.batches = batches_;
  const double p = static_cast<double>(total_);
  est.mean = sum_ / p;
  est.second_moment = sum_outer_ / p;
  est.covariance = est.second_moment - est.mean * est.mean.transpose();
  // Standard error of the mean of B batch estimates: sqrt(s^2 / B).
  const double scale = 1.0 / (static_cast<double>(batches_ - 1) * batches_);
  est.mean_se = (batch_mean_sq_ * scale).cwiseSqrt();
  est.second_moment_se = (batch_m2_sq_ * scale).cwiseSqrt();
  est.covariance_se = (batch_cov_sq_ * scale).cwiseSqrt();
  return est;
}

double MomentEstimate::sup_scale_norm(const SpectralModel& model, double r) const {
  if (model.dim() != state_dim) throw InvalidArgument("sup_scale_norm: model dimension mismatch");
  if (!(r >= -1.0 && r <= 1.0)) throw InvalidArgument("sup_scale_norm: exponent must lie in [-1, 1]");
  double sup = 0.0;
  for (int k = 0; k < points; ++k) {
    double acc = 0.0;
    for (int n = 0; n < state_dim; ++n) acc += std::pow(model.eigenvalue(n), r) * second_at(k, n, k, n);
    sup = std::max(sup, std::sqrt(std::max(acc, 0.0)));
  }
  return sup;
}

MomentEstimate estimate_moments(const Ensemble& ensemble, int batches) {
  const int p = ensemble.paths();
  if (p < 2) throw InsufficientSamples("estimate_moments: need at least 2 paths, got " + std::to_string(p));
  if (ensemble.samples.cols() != static_cast<Eigen::Index>(ensemble.points()) * ensemble.state_dim) {
    throw InvalidArgument("estimate_moments: sample width does not match plan and state dimension");
  }
  MomentAccumulator acc(ensemble.points(), ensemble.state_dim, p, batches);
  for (int b = 0; b < acc.batches(); ++b) {
    const auto [begin, end] = acc.batch_range(b);
    acc.add_batch(ensemble.samples.middleRows(begin, end - begin));
  }
  return acc.finish();
}

Ensemble simulate_ensemble(const SpectralModel& model, const NoiseModel& noise,
                           const AffineNoiseMap& gmap, const InitialLaw& initial,
                           const SamplingPlan& plan, const SimulationSettings& settings) {
  check_dims(model, noise, gmap);
  check_plan(plan);
  if (settings.paths < 1) throw InvalidArgument("simulate_ensemble: paths must be >= 1");
  if (initial.mean().size() != model.dim()) throw InvalidArgument("simulate_ensemble: X0 has wrong dimension");
  Ensemble ens;
  ens.state_dim = model.dim();
  ens.plan = plan;
  ens.horizon = model.horizon();
  ens.seed = settings.seed;
  ens.samples.resize(settings.paths, static_cast<Eigen::Index>(plan.points()) * model.dim());
  detail::parallel_for(0, settings.paths, settings.threads, [&](int p) {
    Rng rng = make_stream(settings.seed, static_cast<std::uint64_t>(p));
    const Eigen::VectorXd x0 = initial.sample(rng);
    observe_path(model, noise, gmap, x0, plan, rng, ens.samples.row(p));
  });
  return ens;
}

MomentEstimate simulate_moments(const SpectralModel& model, const NoiseModel& noise,
                                const AffineNoiseMap& gmap, const InitialLaw& initial,
                                const SamplingPlan& plan, const SimulationSettings& settings,
                                int batches) {
  check_dims(model, noise, gmap);
  check_plan(plan);
  if (initial.mean().size() != model.dim()) throw InvalidArgument("simulate_moments: X0 has wrong dimension");
  MomentAccumulator acc(plan.points(), model.dim(), settings.paths, batches);
  const Eigen::Index width = static_cast<Eigen::Index>(plan.points()) * model.dim();
  for (int b = 0; b < acc.batches(); ++b) {
    const auto [begin, end] = acc.batch_range(b);
    Eigen::MatrixXd rows(end - begin, width);
    detail::parallel_for(begin, end, settings.threads, [&](int p) {
      Rng rng = make_stream(settings.seed, static_cast<std::uint64_t>(p));
      const Eigen::VectorXd x0 = initial.sample(rng);
      observe_path(model, noise, gmap, x0, plan, rng, rows.row(p - begin));
    });
    acc.add_batch(rows);
  }
  return acc.finish();
}

// ---------------------------------------------------------------------------
// Pathwise diagnostics

double weak_identity_residual(const Eigen::MatrixXd& path, const Eigen::MatrixXd& v,
                              const SpectralModel& model, const AffineNoiseMap& gmap,
                              const Eigen::MatrixXd& increments) {
  const auto steps = path.rows() - 1;
  const int n = model.dim();
  if (steps < 1 || path.cols() != n) throw InvalidArgument("weak_identity_residual: path must be (K+1) x N");
  if (v.rows() != path.rows() || v.cols() != n) {
    throw InvalidArgument("weak_identity_residual: test function must be (K+1) x N");
  }
  if (increments.rows() != steps || increments.cols() != gmap.noise_dim()) {
    throw InvalidArgument("weak_identity_residual: increments must be K x M");
  }
  if (gmap.state_dim() != n) throw InvalidArgument("weak_identity_residual: G has wrong state dimension");
  if (!v.row(steps).isZero(0.0)) {
    throw InvalidArgument("weak_identity_residual: test function must vanish at the final node");
  }
  const double dt = model.horizon() / static_cast<double>(steps);
  const Eigen::VectorXd& lam = model.eigenvalues();

  double lhs = 0.0;
  double stochastic = 0.0;
  for (Eigen::Index k = 0; k < steps; ++k) {
    const Eigen::VectorXd x0 = path.row(k).transpose();
    const Eigen::VectorXd x1 = path.row(k + 1).transpose();
    const Eigen::VectorXd v0 = v.row(k).transpose();
    const Eigen::VectorXd v1 = v.row(k + 1).transpose();
    // -int <X, v'>: v' is constant on the cell, X linear.
    lhs -= 0.5 * (x0 + x1).dot(v1 - v0);
    // int <X, A v> for two linear functions on the cell.
    const Eigen::VectorXd av0 = lam.cwiseProduct(v0);
    const Eigen::VectorXd av1 = lam.cwiseProduct(v1);
    lhs += dt * (x0.dot(av0) / 3.0 + x1.dot(av1) / 3.0 + (x0.dot(av1) + x1.dot(av0)) / 6.0);
    stochastic += v0.dot(g_apply(gmap, x0, increments.row(k).transpose()));
  }
  const double rhs = path.row(0).dot(v.row(0)) + stochastic;
  return lhs - rhs;
}

IsometryCheck ito_isometry_check(const NoiseModel& noise, const Eigen::MatrixXd& v1,
                                 const Eigen::MatrixXd& v2, const std::vector<Eigen::MatrixXd>& phi,
                                 double horizon, int samples, std::uint64_t seed, int batches) {
  const auto steps = static_cast<Eigen::Index>(phi.size());
  if (steps < 1) throw InvalidArgument("ito_isometry_check: need at least one time step");
  if (!(horizon > 0.0)) throw InvalidArgument("ito_isometry_check: horizon must be positive");
  const auto n = v1.cols();
  if (v1.rows() != steps + 1 || v2.rows() != steps + 1 || v2.cols() != n) {
    throw InvalidArgument("ito_isometry_check: v1, v2 must be (K+1) x N");
  }
  for (const auto& p : phi) {
    if (p.rows() != n || p.cols() != noise.dim()) {
      throw InvalidArgument("ito_isometry_check: every Phi must be N x M");
    }
  }
  if (samples < 2) throw InsufficientSamples("ito_isometry_check: need at least 2 samples");
  const double dt = horizon / static_cast<double>(steps);

  IsometryCheck out;
  for (Eigen::Index k = 0; k < steps; ++k) {
    const Eigen::RowVectorXd a = v1.row(k) * phi[static_cast<std::size_t>(k)];
    const Eigen::RowVectorXd b = v2.row(k) * phi[static_cast<std::size_t>(k)];
    out.rhs += dt * (a.array() * b.array() * noise.q_eigenvalues().transpose().array()).sum();
  }

  // Functionals w -> <v_i(t_k), Phi_k w> are fixed; precompute them.
  std::vector<Eigen::RowVectorXd> f1, f2;
  for (Eigen::Index k = 0; k < steps; ++k) {
    f1.emplace_back(v1.row(k) * phi[static_cast<std::size_t>(k)]);
    f2.emplace_back(v2.row(k) * phi[static_cast<std::size_t>(k)]);
  }
  const int nb = std::min(batches, samples);
  Eigen::VectorXd batch_sum = Eigen::VectorXd::Zero(nb);
  Eigen::VectorXd batch_count = Eigen::VectorXd::Zero(nb);
  Eigen::VectorXd dl(noise.dim());
  double total = 0.0;
  for (int s = 0; s < samples; ++s) {
    Rng rng = make_stream(seed, static_cast<std::uint64_t>(s));
    double i1 = 0.0;
    double i2 = 0.0;
    for (Eigen::Index k = 0; k < steps; ++k) {
      noise.sample_increment(dt, rng, dl);
      i1 += f1[static_cast<std::size_t>(k)].dot(dl);
      i2 += f2[static_cast<std::size_t>(k)].dot(dl);
    }
    const int b = static_cast<int>(static_cast<long long>(s) * nb / samples);
    batch_sum[b] += i1 * i2;
    batch_count[b] += 1.0;
    total += i1 * i2;
  }
  out.lhs = total / samples;
  const Eigen::VectorXd means = batch_sum.cwiseQuotient(batch_count);
  const double centre = means.mean();
  out.se = std::sqrt((means.array() - centre).square().sum() / ((nb - 1.0) * nb));
  const double diff = out.lhs - out.rhs;
  if (out.se > 0.0) {
    out.z_score = diff / out.se;
  } else {
    out.z_score = diff == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
  }
  return out;
}

}  // namespace stm
