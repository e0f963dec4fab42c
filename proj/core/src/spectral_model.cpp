#include "stm/spectral_model.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "stm/error.hpp"

namespace stm {

SpectralModel::SpectralModel(Eigen::VectorXd eigenvalues, double horizon)
    : eigenvalues_(std::move(eigenvalues)), horizon_(horizon) {
  if (eigenvalues_.size() == 0) {
    throw InvalidArgument("SpectralModel: at least one eigenvalue is required");
  }
  for (Eigen::Index n = 0; n < eigenvalues_.size(); ++n) {
    const double lam = eigenvalues_[n];
    if (!std::isfinite(lam) || lam <= 0.0) {
      throw InvalidArgument("SpectralModel: eigenvalue " + std::to_string(n) +
                            " must be finite and strictly positive");
    }
    if (n > 0 && lam < eigenvalues_[n - 1]) {
      throw InvalidArgument("SpectralModel: eigenvalues must be sorted ascending");
    }
  }
  if (!std::isfinite(horizon_) || horizon_ <= 0.0) {
    throw InvalidArgument("SpectralModel: horizon must be finite and positive");
  }
}

SpectralModel SpectralModel::dirichlet_laplacian(int dim, double length, double horizon) {
  if (dim < 1) throw InvalidArgument("dirichlet_laplacian: dim must be >= 1");
  if (!(length > 0.0) || !std::isfinite(length)) {
    throw InvalidArgument("dirichlet_laplacian: length must be positive");
  }
  Eigen::VectorXd lam(dim);
  for (int n = 1; n <= dim; ++n) {
    const double k = n * std::numbers::pi / length;
    lam[n - 1] = k * k;
  }
  return SpectralModel(std::move(lam), horizon);
}

double SpectralModel::eigenvalue(int mode) const {
  if (mode < 0 || mode >= dim()) {
    throw InvalidArgument("SpectralModel: mode index " + std::to_string(mode) + " out of range");
  }
  return eigenvalues_[mode];
}

void SpectralModel::check_length(const Eigen::VectorXd& coeffs) const {
  if (coeffs.size() != eigenvalues_.size()) {
    throw InvalidArgument("SpectralModel: coefficient vector has length " +
                          std::to_string(coeffs.size()) + ", expected " + std::to_string(dim()));
  }
}

Eigen::VectorXd SpectralModel::semigroup_apply(double t, const Eigen::VectorXd& coeffs) const {
  if (!(t >= 0.0)) throw InvalidArgument("semigroup_apply: t must be >= 0");
  check_length(coeffs);
  return ((-t) * eigenvalues_.array()).exp() * coeffs.array();
}

double SpectralModel::fractional_norm(double r, const Eigen::VectorXd& coeffs) const {
  if (!(r >= -1.0 && r <= 1.0)) {
    throw InvalidArgument("fractional_norm: exponent must lie in [-1, 1]");
  }
  check_length(coeffs);
  return std::sqrt((eigenvalues_.array().pow(r) * coeffs.array().square()).sum());
}

double SpectralModel::smoothing_integral(int mode, double upper) const {
  const double lam = eigenvalue(mode);
  if (!(upper > 0.0) || upper > horizon_) {
    throw InvalidArgument("smoothing_integral: upper limit must lie in (0, T]");
  }
  // (1 - exp(-2 lam u)) / 2, written with expm1 so tiny arguments keep precision.
  return -0.5 * std::expm1(-2.0 * lam * upper);
}

}  // namespace stm
