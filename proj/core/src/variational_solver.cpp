#include "stm/variational_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "parallel.hpp"
#include "stm/error.hpp"
#include "stm/moment_oracle.hpp"

namespace stm {

TimeGrid TimeGrid::uniform(int steps, double horizon) {
  if (steps < 2) throw InvalidArgument("TimeGrid: at least 2 steps are required");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InvalidArgument("TimeGrid: horizon must be positive");
  return TimeGrid{steps, horizon};
}

// ---------------------------------------------------------------------------
// PerModeSystem

PerModeSystem::PerModeSystem(SpectralModel model, TimeGrid grid)
    : model_(std::move(model)), grid_(TimeGrid::uniform(grid.steps, grid.horizon)) {
  if (std::abs(grid_.horizon - model_.horizon()) > 1e-14 * model_.horizon()) {
    throw InvalidArgument("PerModeSystem: grid horizon differs from the model horizon");
  }
  const int kk = grid_.steps;
  const double dt = grid_.dt();
  for (int n = 0; n < model_.dim(); ++n) {
    const double lam = model_.eigenvalue(n);

    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(kk, kk);
    Eigen::MatrixXd mass = Eigen::MatrixXd::Zero(kk, kk);
    Eigen::MatrixXd stiff = Eigen::MatrixXd::Zero(kk, kk);
    for (int k = 0; k < kk; ++k) {
      // Cell I_k = (t_k, t_{k+1}] carries hat k (1 -> 0) and hat k+1 (0 -> 1).
      const int hats[2] = {k, k + 1};
      const double left[2] = {1.0, 0.0};
      const double right[2] = {0.0, 1.0};
      const double slope[2] = {-1.0 / dt, 1.0 / dt};
      for (int a = 0; a < 2; ++a) {
        if (hats[a] >= kk) continue;
        b(k, hats[a]) = (left[a] - right[a]) + lam * 0.5 * dt;
        for (int c = 0; c < 2; ++c) {
          if (hats[c] >= kk) continue;
          mass(hats[a], hats[c]) += a == c ? dt / 3.0 : dt / 6.0;
          stiff(hats[a], hats[c]) += slope[a] * slope[c] * dt;
        }
      }
    }
    if (b.diagonal().cwiseAbs().minCoeff() == 0.0) {
      throw AssemblyError("PerModeSystem: singular form matrix in mode " + std::to_string(n));
    }
    Eigen::MatrixXd gy = lam * mass + stiff / lam;
    Eigen::LLT<Eigen::MatrixXd> llt(gy);
    if (llt.info() != Eigen::Success) {
      throw AssemblyError("PerModeSystem: test Gram is not positive definite in mode " + std::to_string(n));
    }
    b_.push_back(std::move(b));
    gx_.push_back(Eigen::VectorXd::Constant(kk, lam * dt));
    gy_.push_back(std::move(gy));
    gy_factor_.push_back(std::move(llt));
  }
}

Eigen::VectorXd PerModeSystem::solve_transposed(int mode, const Eigen::VectorXd& r) const {
  if (r.size() != steps()) throw InvalidArgument("solve_transposed: right-hand side has wrong length");
  return form(mode).transpose().triangularView<Eigen::Lower>().solve(r);
}

double PerModeSystem::trial_norm(int mode, const Eigen::VectorXd& c) const {
  return std::sqrt(c.cwiseAbs2().dot(trial_gram(mode)));
}

double PerModeSystem::test_dual_norm(int mode, const Eigen::VectorXd& f) const {
  return std::sqrt(f.dot(gy_factor_[static_cast<std::size_t>(mode)].solve(f)));
}

PerModeSystem assemble_per_mode(const SpectralModel& model, const TimeGrid& grid) {
  return PerModeSystem(model, grid);
}

// ---------------------------------------------------------------------------
// Temporal weights

TemporalWeights::TemporalWeights(const TimeGrid& grid)
    : steps_(TimeGrid::uniform(grid.steps, grid.horizon).steps), dt_(grid.dt()) {}

double TemporalWeights::operator()(int k, int l1, int l2) const {
  if (k < 0 || k >= steps_ || l1 < 0 || l1 >= steps_ || l2 < 0 || l2 >= steps_) {
    throw InvalidArgument("TemporalWeights: index out of range");
  }
  const auto hats = local_hats(k);
  const int a = l1 == hats[0] ? 0 : (l1 == hats[1] ? 1 : -1);
  const int b = l2 == hats[0] ? 0 : (l2 == hats[1] ? 1 : -1);
  if (a < 0 || b < 0) return 0.0;
  return local(a, b);
}

TemporalWeights tdelta_assemble(const TimeGrid& grid) { return TemporalWeights(grid); }

// ---------------------------------------------------------------------------
// SpaceTimeArray

SpaceTimeArray::SpaceTimeArray(int steps, int modes)
    : steps_(steps), modes_(modes),
      data_(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(steps) * modes,
                                  static_cast<Eigen::Index>(steps) * modes)) {
  if (steps < 1 || modes < 1) throw InvalidArgument("SpaceTimeArray: empty shape");
}

Eigen::MatrixXd SpaceTimeArray::time_diagonal(int k) const {
  Eigen::MatrixXd d(modes_, modes_);
  for (int n = 0; n < modes_; ++n) {
    for (int m = 0; m < modes_; ++m) d(n, m) = at(k, n, k, m);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Loads

namespace {

void check_inputs(const PerModeSystem& system, const NoiseModel& noise, const AffineNoiseMap& gmap) {
  if (gmap.state_dim() != system.modes() || gmap.noise_dim() != noise.dim()) {
    throw InvalidArgument("dimension mismatch between system (N=" + std::to_string(system.modes()) +
                          "), noise (M=" + std::to_string(noise.dim()) + ") and G (" +
                          std::to_string(gmap.state_dim()) + "x" + std::to_string(gmap.noise_dim()) + ")");
  }
}

void check_mean(const PerModeSystem& system, const Eigen::MatrixXd& mean_coeffs) {
  if (mean_coeffs.rows() != system.steps() || mean_coeffs.cols() != system.modes()) {
    throw InvalidArgument("mean coefficients must be K x N; solve the mean problem first");
  }
}

void check_initial(const PerModeSystem& system, const Eigen::MatrixXd& m0) {
  if (m0.rows() != system.modes() || m0.cols() != system.modes()) {
    throw InvalidArgument("initial second moment / covariance must be N x N");
  }
}

// load[l1, ., l2, .] += W[k, l1, l2] * phi for the hats on cell k.
void scatter_cell(SpaceTimeLoad& load, const TemporalWeights& w, int k, const Eigen::MatrixXd& phi) {
  const auto hats = w.local_hats(k);
  const int n = load.modes();
  for (int a = 0; a < 2; ++a) {
    if (hats[a] < 0) continue;
    for (int b = 0; b < 2; ++b) {
      if (hats[b] < 0) continue;
      const double weight = w.local(a, b);
      for (int m1 = 0; m1 < n; ++m1) {
        for (int m2 = 0; m2 < n; ++m2) load.at(hats[a], m1, hats[b], m2) += weight * phi(m1, m2);
      }
    }
  }
}

void add_initial(SpaceTimeLoad& load, const Eigen::MatrixXd& m0) {
  // R_{0,0}: only hat 0 is nonzero at t = 0.
  for (int m1 = 0; m1 < load.modes(); ++m1) {
    for (int m2 = 0; m2 < load.modes(); ++m2) load.at(0, m1, 0, m2) += m0(m1, m2);
  }
}

}  // namespace

Eigen::MatrixXd solve_mean(const PerModeSystem& system, const Eigen::VectorXd& x0_mean) {
  if (x0_mean.size() != system.modes()) throw InvalidArgument("solve_mean: E[X0] has wrong length");
  Eigen::MatrixXd coeffs(system.steps(), system.modes());
  for (int n = 0; n < system.modes(); ++n) {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(system.steps());
    r[0] = x0_mean[n];
    coeffs.col(n) = system.solve_transposed(n, r);
  }
  if (!coeffs.allFinite()) throw AssemblyError("solve_mean: non-finite solution");
  return coeffs;
}

SpaceTimeLoad rhs_second_moment(const PerModeSystem& system, const NoiseModel& noise,
                                const AffineNoiseMap& gmap, const Eigen::MatrixXd& mean_coeffs,
                                const Eigen::MatrixXd& second_moment0) {
  check_inputs(system, noise, gmap);
  check_mean(system, mean_coeffs);
  check_initial(system, second_moment0);
  const int n = system.modes();
  SpaceTimeLoad load(system.steps(), n);
  add_initial(load, second_moment0);
  const TemporalWeights w(system.grid());
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < system.steps(); ++k) {
    // M = 0 leaves exactly the three terms involving G2.
    const Eigen::MatrixXd phi = noise_quadratic_form(gmap, noise, zero, mean_coeffs.row(k).transpose());
    scatter_cell(load, w, k, phi);
  }
  return load;
}

SpaceTimeLoad rhs_covariance(const PerModeSystem& system, const NoiseModel& noise,
                             const AffineNoiseMap& gmap, const Eigen::MatrixXd& mean_coeffs,
                             const Eigen::MatrixXd& covariance0) {
  check_inputs(system, noise, gmap);
  check_mean(system, mean_coeffs);
  check_initial(system, covariance0);
  const int n = system.modes();
  SpaceTimeLoad load(system.steps(), n);
  add_initial(load, covariance0);
  const TemporalWeights w(system.grid());
  for (int k = 0; k < system.steps(); ++k) {
    const Eigen::VectorXd mk = mean_coeffs.row(k).transpose();
    const Eigen::MatrixXd phi = noise_quadratic_form(gmap, noise, mk * mk.transpose(), mk);
    scatter_cell(load, w, k, phi);
  }
  return load;
}

SpaceTimeLoad tdelta_load(const PerModeSystem& system, const NoiseModel& noise,
                          const AffineNoiseMap& gmap, const SpaceTimeMoment& u) {
  check_inputs(system, noise, gmap);
  if (u.steps() != system.steps() || u.modes() != system.modes()) {
    throw InvalidArgument("tdelta_load: moment has wrong shape");
  }
  SpaceTimeLoad load(system.steps(), system.modes());
  const TemporalWeights w(system.grid());
  for (int k = 0; k < system.steps(); ++k) {
    scatter_cell(load, w, k, noise_quadratic_linear_part(gmap, noise, u.time_diagonal(k)));
  }
  return load;
}

SpaceTimeLoad apply_tensor_operator(const PerModeSystem& system, const SpaceTimeMoment& u) {
  if (u.steps() != system.steps() || u.modes() != system.modes()) {
    throw InvalidArgument("apply_tensor_operator: moment has wrong shape");
  }
  SpaceTimeLoad out(system.steps(), system.modes());
  for (int n = 0; n < system.modes(); ++n) {
    for (int m = 0; m < system.modes(); ++m) {
      out.block(n, m) = system.form(n).transpose() * u.block(n, m) * system.form(m);
    }
  }
  return out;
}

SpaceTimeMoment solve_tensor_operator(const PerModeSystem& system, const SpaceTimeLoad& load, int threads) {
  if (load.steps() != system.steps() || load.modes() != system.modes()) {
    throw InvalidArgument("solve_tensor_operator: load has wrong shape");
  }
  const int modes = system.modes();
  SpaceTimeMoment u(system.steps(), modes);
  detail::parallel_for(0, modes * modes, threads, [&](int pair) {
    const int n = pair / modes;
    const int m = pair % modes;
    // U = B_n^{-T} F B_m^{-1}.
    Eigen::MatrixXd x = system.form(n).transpose().triangularView<Eigen::Lower>().solve(load.block(n, m));
    system.form(m).triangularView<Eigen::Upper>().solveInPlace<Eigen::OnTheRight>(x);
    u.block(n, m) = x;
  });
  return u;
}

SpaceTimeMoment mean_outer(const Eigen::MatrixXd& mean_coeffs) {
  const int kk = static_cast<int>(mean_coeffs.rows());
  const int n = static_cast<int>(mean_coeffs.cols());
  SpaceTimeMoment out(kk, n);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) out.block(a, b) = mean_coeffs.col(a) * mean_coeffs.col(b).transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Picard iteration

std::vector<double> PicardResult::update_ratios() const {
  std::vector<double> r;
  for (std::size_t j = 1; j < updates.size(); ++j) {
    r.push_back(updates[j - 1] > 0.0 ? updates[j] / updates[j - 1] : 0.0);
  }
  return r;
}

namespace {

bool coupling_active(const NoiseModel& noise, const AffineNoiseMap& gmap) {
  for (int m = 0; m < gmap.noise_dim(); ++m) {
    if (noise.q_eigenvalues()[m] != 0.0 && !gmap.g1_slice(m).isZero(0.0)) return true;
  }
  return false;
}

PicardResult picard(const PerModeSystem& system, const NoiseModel& noise, const AffineNoiseMap& gmap,
                    const SpaceTimeLoad& load, const PicardOptions& options) {
  check_inputs(system, noise, gmap);
  if (load.steps() != system.steps() || load.modes() != system.modes()) {
    throw InvalidArgument("picard: load has wrong shape");
  }
  if (!(options.tol > 0.0)) throw InvalidArgument("picard: tol must be positive");
  if (options.max_iter < 1) throw InvalidArgument("picard: max_iter must be >= 1");

  PicardResult result;
  result.g1_norm = g1_v_to_hs_norm(gmap, system.model(), noise);
  if (result.g1_norm >= 1.0) {
    std::ostringstream msg;
    msg << "||G1||_{L(V;L2(H;H))} = " << result.g1_norm << " >= 1: no contraction guarantee";
    result.warnings.push_back(msg.str());
  }

  const bool coupled = coupling_active(noise, gmap);
  SpaceTimeMoment u(system.steps(), system.modes());
  for (int it = 1; it <= options.max_iter; ++it) {
    SpaceTimeLoad current = load;
    if (coupled) current.data() += tdelta_load(system, noise, gmap, u).data();
    SpaceTimeMoment next = solve_tensor_operator(system, current, options.threads);
    if (!next.data().allFinite()) {
      throw NonConvergence("Picard iteration produced non-finite values", result.updates);
    }
    const double update = (next.data() - u.data()).cwiseAbs().maxCoeff();
    result.updates.push_back(update);
    u = std::move(next);
    result.final_load = std::move(current);
    result.iterations = it;
    // A constant fixed-point map is solved exactly by its first application.
    if (!coupled || update <= options.tol * u.max_abs()) {
      result.solution = std::move(u);
      const auto ratios = result.update_ratios();
      const double bound = result.g1_norm * result.g1_norm + 0.15;
      if (result.g1_norm < 1.0 && !ratios.empty() && ratios.back() > bound) {
        std::ostringstream msg;
        msg << "final update ratio " << ratios.back() << " exceeds ||G1||^2 + 0.15 = " << bound;
        result.warnings.push_back(msg.str());
      }
      return result;
    }
  }
  throw NonConvergence("Picard iteration did not converge in " + std::to_string(options.max_iter) +
                           " iterations",
                       result.updates);
}

}  // namespace

PicardResult picard_solve_second_moment(const PerModeSystem& system, const NoiseModel& noise,
                                        const AffineNoiseMap& gmap, const SpaceTimeLoad& load,
                                        const PicardOptions& options) {
  return picard(system, noise, gmap, load, options);
}

PicardResult solve_covariance(const PerModeSystem& system, const NoiseModel& noise,
                              const AffineNoiseMap& gmap, const SpaceTimeLoad& load,
                              const PicardOptions& options) {
  return picard(system, noise, gmap, load, options);
}

// ---------------------------------------------------------------------------
// Inf-sup diagnostic

InfSupReport discrete_inf_sup(const PerModeSystem& system) {
  InfSupReport rep;
  rep.per_mode_min.resize(system.modes());
  rep.per_mode_max.resize(system.modes());
  for (int n = 0; n < system.modes(); ++n) {
    const Eigen::VectorXd& gx = system.trial_gram(n);
    if ((gx.array() <= 0.0).any()) throw AssemblyError("discrete_inf_sup: trial Gram is not positive");
    Eigen::LLT<Eigen::MatrixXd> ly(system.test_gram(n));
    if (ly.info() != Eigen::Success) throw AssemblyError("discrete_inf_sup: test Gram is not positive definite");
    // Ly^{-1} B^T Gx^{-1/2}: same singular values as Gy^{-1/2} B^T Gx^{-1/2}.
    Eigen::MatrixXd pencil = system.form(n).transpose() * gx.cwiseSqrt().cwiseInverse().asDiagonal();
    ly.matrixL().solveInPlace(pencil);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(pencil);
    rep.per_mode_min[n] = svd.singularValues().minCoeff();
    rep.per_mode_max[n] = svd.singularValues().maxCoeff();
  }
  rep.global_min = rep.per_mode_min.minCoeff();
  return rep;
}

}  // namespace stm
