#include "stm/moment_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stm/error.hpp"

namespace stm {

Eigen::MatrixXd mean_exact(const SpectralModel& model, const Eigen::VectorXd& x0_mean, int steps) {
  if (steps < 1) throw InvalidArgument("mean_exact: steps must be >= 1");
  if (x0_mean.size() != model.dim()) throw InvalidArgument("mean_exact: mean has wrong length");
  const double dt = model.horizon() / steps;
  Eigen::MatrixXd out(steps + 1, model.dim());
  for (int k = 0; k <= steps; ++k) out.row(k) = model.semigroup_apply(k * dt, x0_mean).transpose();
  return out;
}

namespace {

void check_shapes(const AffineNoiseMap& gmap, const NoiseModel& noise, const Eigen::MatrixXd& mm) {
  const int n = gmap.state_dim();
  if (noise.dim() != gmap.noise_dim()) throw InvalidArgument("noise_quadratic_form: noise dimension mismatch");
  if (mm.rows() != n || mm.cols() != n) throw InvalidArgument("noise_quadratic_form: M must be N x N");
}

}  // namespace

Eigen::MatrixXd noise_quadratic_linear_part(const AffineNoiseMap& gmap, const NoiseModel& noise,
                                            const Eigen::MatrixXd& second_moment) {
  check_shapes(gmap, noise, second_moment);
  const int n = gmap.state_dim();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  for (int m = 0; m < gmap.noise_dim(); ++m) {
    const double g = noise.q_eigenvalues()[m];
    if (g == 0.0) continue;
    const auto& s = gmap.g1_slice(m);
    out.noalias() += g * (s * second_moment * s.transpose());
  }
  return out;
}

Eigen::MatrixXd noise_quadratic_form(const AffineNoiseMap& gmap, const NoiseModel& noise,
                                     const Eigen::MatrixXd& second_moment, const Eigen::VectorXd& mean) {
  check_shapes(gmap, noise, second_moment);
  if (mean.size() != gmap.state_dim()) throw InvalidArgument("noise_quadratic_form: mean has wrong length");
  Eigen::MatrixXd out = noise_quadratic_linear_part(gmap, noise, second_moment);
  for (int m = 0; m < gmap.noise_dim(); ++m) {
    const double g = noise.q_eigenvalues()[m];
    if (g == 0.0) continue;
    const Eigen::VectorXd lin = gmap.g1_slice(m) * mean;
    const Eigen::VectorXd aff = gmap.g2().col(m);
    out.noalias() += g * (lin * aff.transpose() + aff * lin.transpose() + aff * aff.transpose());
  }
  return out;
}

MomentField lyapunov_solve(const SpectralModel& model, const NoiseModel& noise,
                           const AffineNoiseMap& gmap, const Eigen::VectorXd& m0,
                           const Eigen::MatrixXd& second_moment0, int steps, int substeps) {
  const int n = model.dim();
  if (gmap.state_dim() != n || gmap.noise_dim() != noise.dim()) {
    throw InvalidArgument("lyapunov_solve: dimensions of model, noise and G disagree");
  }
  if (m0.size() != n || second_moment0.rows() != n || second_moment0.cols() != n) {
    throw InvalidArgument("lyapunov_solve: initial moments have wrong shape");
  }
  const double scale = std::max(1.0, second_moment0.cwiseAbs().maxCoeff());
  if ((second_moment0 - second_moment0.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw InvalidArgument("lyapunov_solve: initial second moment must be symmetric");
  }
  if (steps < 1) throw InvalidArgument("lyapunov_solve: steps must be >= 1");
  if (substeps < 4) throw InvalidArgument("lyapunov_solve: at least 4 substeps per step are required");

  const Eigen::VectorXd& lam = model.eigenvalues();
  const double dt = model.horizon() / steps;
  const double h = dt / substeps;
  auto rhs = [&](double t, const Eigen::MatrixXd& mm) -> Eigen::MatrixXd {
    const Eigen::VectorXd mt = model.semigroup_apply(t, m0);
    Eigen::MatrixXd d = noise_quadratic_form(gmap, noise, mm, mt);
    d -= lam.asDiagonal() * mm;
    d -= mm * lam.asDiagonal();
    return d;
  };

  MomentField field;
  field.mean = mean_exact(model, m0, steps);
  field.times.resize(static_cast<std::size_t>(steps) + 1);
  field.diagonal.reserve(static_cast<std::size_t>(steps) + 1);
  Eigen::MatrixXd mm = 0.5 * (second_moment0 + second_moment0.transpose());
  field.times[0] = 0.0;
  field.diagonal.push_back(mm);
  for (int k = 0; k < steps; ++k) {
    for (int s = 0; s < substeps; ++s) {
      const double t = k * dt + s * h;
      const Eigen::MatrixXd k1 = rhs(t, mm);
      const Eigen::MatrixXd k2 = rhs(t + 0.5 * h, mm + 0.5 * h * k1);
      const Eigen::MatrixXd k3 = rhs(t + 0.5 * h, mm + 0.5 * h * k2);
      const Eigen::MatrixXd k4 = rhs(t + h, mm + h * k3);
      mm += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    mm = 0.5 * (mm + mm.transpose()).eval();
    field.times[static_cast<std::size_t>(k) + 1] = (k + 1) * dt;
    field.diagonal.push_back(mm);
  }
  return field;
}

MomentField two_time_extend(const SpectralModel& model, MomentField field) {
  const int steps = field.steps();
  const int n = field.state_dim();
  if (steps < 0 || static_cast<int>(field.diagonal.size()) != steps + 1) {
    throw InvalidArgument("two_time_extend: field has no diagonal second moment");
  }
  if (model.dim() != n) throw InvalidArgument("two_time_extend: model dimension mismatch");
  const Eigen::Index d = static_cast<Eigen::Index>(steps + 1) * n;
  Eigen::MatrixXd two(d, d);
  for (int k = 0; k <= steps; ++k) {
    const auto& mk = field.diagonal[static_cast<std::size_t>(k)];
    for (int l = k; l <= steps; ++l) {
      const double lag = field.times[static_cast<std::size_t>(l)] - field.times[static_cast<std::size_t>(k)];
      const Eigen::VectorXd decay = (-lag * model.eigenvalues().array()).exp();
      const Eigen::MatrixXd block = mk * decay.asDiagonal();
      two.block(static_cast<Eigen::Index>(k) * n, static_cast<Eigen::Index>(l) * n, n, n) = block;
      two.block(static_cast<Eigen::Index>(l) * n, static_cast<Eigen::Index>(k) * n, n, n) = block.transpose();
    }
  }
  field.two_time = std::move(two);
  return field;
}

}  // namespace stm
