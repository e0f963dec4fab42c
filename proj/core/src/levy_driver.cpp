#include "stm/levy_driver.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "stm/error.hpp"

namespace stm {

Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

NoiseModel::NoiseModel(Eigen::VectorXd q_eigenvalues, double wiener_fraction, double jump_rate)
    : gamma_(std::move(q_eigenvalues)), rho_(wiener_fraction), nu_(jump_rate) {
  if (gamma_.size() == 0) throw InvalidArgument("NoiseModel: at least one noise mode is required");
  for (Eigen::Index m = 0; m < gamma_.size(); ++m) {
    if (!std::isfinite(gamma_[m]) || gamma_[m] < 0.0) {
      throw InvalidArgument("NoiseModel: q eigenvalue " + std::to_string(m) +
                            " must be finite and nonnegative");
    }
  }
  if (!(rho_ >= 0.0 && rho_ <= 1.0)) {
    throw InvalidArgument("NoiseModel: wiener_fraction must lie in [0, 1]");
  }
  if (!std::isfinite(nu_) || nu_ < 0.0) {
    throw InvalidArgument("NoiseModel: jump_rate must be finite and nonnegative");
  }
  trace_ = gamma_.sum();
  if (rho_ < 1.0 && trace_ > 0.0) {
    if (nu_ <= 0.0) {
      throw InvalidArgument("NoiseModel: a jump share (wiener_fraction < 1) requires jump_rate > 0");
    }
    jump_size_ = std::sqrt((1.0 - rho_) * trace_ / nu_);
    const std::vector<double> w(gamma_.data(), gamma_.data() + gamma_.size());
    jump_mode_ = std::discrete_distribution<int>::param_type(w.begin(), w.end());
  }
}

void NoiseModel::check_length(const Eigen::VectorXd& x) const {
  if (x.size() != gamma_.size()) {
    throw InvalidArgument("NoiseModel: vector has length " + std::to_string(x.size()) +
                          ", expected " + std::to_string(dim()));
  }
}

Tensor2 NoiseModel::covariance_kernel() const { return Tensor2(gamma_.asDiagonal().toDenseMatrix()); }

Eigen::VectorXd NoiseModel::q_sqrt_apply(const Eigen::VectorXd& x) const {
  check_length(x);
  return gamma_.array().sqrt() * x.array();
}

Eigen::VectorXd NoiseModel::q_pinv_sqrt_apply(const Eigen::VectorXd& x) const {
  check_length(x);
  Eigen::VectorXd out(x.size());
  for (Eigen::Index m = 0; m < x.size(); ++m) {
    out[m] = gamma_[m] > 0.0 ? x[m] / std::sqrt(gamma_[m]) : 0.0;
  }
  return out;
}

double NoiseModel::hs_norm_on_cameron_martin(const Eigen::MatrixXd& b) const {
  if (b.cols() != gamma_.size()) {
    throw InvalidArgument("hs_norm_on_cameron_martin: operator must have " +
                          std::to_string(dim()) + " columns");
  }
  return std::sqrt((b.colwise().squaredNorm().transpose().array() * gamma_.array()).sum());
}

Eigen::VectorXd NoiseModel::sample_increment(double dt, Rng& rng) const {
  Eigen::VectorXd inc(dim());
  sample_increment(dt, rng, inc);
  return inc;
}

void NoiseModel::sample_increment(double dt, Rng& rng, Eigen::Ref<Eigen::VectorXd> out) const {
  if (!(dt > 0.0)) throw InvalidArgument("sample_increment: dt must be positive");
  if (out.size() != gamma_.size()) throw InvalidArgument("sample_increment: output has wrong length");
  const int m_dim = dim();
  std::normal_distribution<double> normal;
  for (int m = 0; m < m_dim; ++m) {
    out[m] = std::sqrt(dt * rho_ * gamma_[m]) * normal(rng);
  }
  if (jump_size_ > 0.0) {
    std::poisson_distribution<int> count_dist(nu_ * dt);
    const int count = count_dist(rng);
    if (count > 0) {
      std::discrete_distribution<int> pick(jump_mode_);
      std::bernoulli_distribution sign;
      for (int j = 0; j < count; ++j) {
        const int m = pick(rng);
        out[m] += sign(rng) ? jump_size_ : -jump_size_;
      }
    }
  }
}

Eigen::MatrixXd NoiseModel::sample_path(double dt, int steps, Rng& rng) const {
  if (steps < 0) throw InvalidArgument("sample_path: steps must be >= 0");
  Eigen::MatrixXd path = Eigen::MatrixXd::Zero(steps + 1, dim());
  for (int k = 0; k < steps; ++k) {
    path.row(k + 1) = path.row(k) + sample_increment(dt, rng).transpose();
  }
  return path;
}

}  // namespace stm
