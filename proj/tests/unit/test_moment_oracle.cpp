#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <unsupported/Eigen/MatrixFunctions>

#include "stm/error.hpp"
#include "stm/moment_oracle.hpp"

using stm::AffineNoiseMap;
using stm::NoiseModel;
using stm::SpectralModel;

namespace {

const SpectralModel kScalar(Eigen::VectorXd::Ones(1), 1.0);
const NoiseModel kUnit = NoiseModel::wiener(Eigen::VectorXd::Ones(1));

// closed form of M' = c M + 2ab e^{-t} + b^2, c = a^2 - 2, m = e^{-t}
double scalar_second_moment(double a, double b, double m0, double big_m0, double t) {
  const double c = a * a - 2.0;
  const double ect = std::exp(c * t);
  return ect * big_m0 + 2.0 * a * b * m0 * (ect - std::exp(-t)) / (c + 1.0) + b * b * (ect - 1.0) / c;
}

AffineNoiseMap random_gmap(std::mt19937_64& rng, int n, int m, double g1_scale) {
  std::normal_distribution<double> z;
  std::vector<Eigen::MatrixXd> g1(m, Eigen::MatrixXd(n, n));
  for (auto& s : g1)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) s(i, j) = g1_scale * z(rng);
  Eigen::MatrixXd g2(n, m);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < m; ++k) g2(i, k) = z(rng);
  return AffineNoiseMap(std::move(g1), std::move(g2));
}

// The moment system is linear in z = (vec M, m, 1) with constant
// coefficients, so z(t) = exp(t Z) z(0). Built entry by entry from the
// component formula for Phi.
Eigen::MatrixXd augmented_generator(const SpectralModel& model, const NoiseModel& noise, const AffineNoiseMap& g) {
  const int n = model.dim();
  const int size = n * n + n + 1;
  auto idx = [n](int i, int j) { return i * n + j; };
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(size, size);
  const Eigen::VectorXd& lam = model.eigenvalues();
  const Eigen::VectorXd& gam = noise.q_eigenvalues();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const int r = idx(i, j);
      z(r, r) -= lam[i] + lam[j];
      for (int q = 0; q < noise.dim(); ++q) {
        for (int a = 0; a < n; ++a)
          for (int b = 0; b < n; ++b) z(r, idx(a, b)) += gam[q] * g.g1(i, a, q) * g.g1(j, b, q);
        for (int a = 0; a < n; ++a)
          z(r, n * n + a) += gam[q] * (g.g1(i, a, q) * g.g2()(j, q) + g.g2()(i, q) * g.g1(j, a, q));
        z(r, size - 1) += gam[q] * g.g2()(i, q) * g.g2()(j, q);
      }
    }
  for (int i = 0; i < n; ++i) z(n * n + i, n * n + i) = -lam[i];
  return z;
}

}  // namespace

TEST(MomentOracle, MeanExactExamples) {
  EXPECT_EQ(stm::mean_exact(kScalar, Eigen::VectorXd::Zero(1), 4), Eigen::MatrixXd::Zero(5, 1));
  EXPECT_NEAR(stm::mean_exact(kScalar, Eigen::VectorXd::Ones(1), 4)(4, 0), std::exp(-1.0), 1e-15);
  const SpectralModel two(Eigen::Vector2d(1.0, 4.0), 1.0);
  const Eigen::MatrixXd m = stm::mean_exact(two, Eigen::Vector2d(1.0, 1.0), 2);
  EXPECT_NEAR(m(1, 0), std::exp(-0.5), 1e-15);
  EXPECT_NEAR(m(1, 1), std::exp(-2.0), 1e-15);
  EXPECT_THROW(stm::mean_exact(two, Eigen::VectorXd::Ones(1), 2), stm::InvalidArgument);
}

TEST(MomentOracle, QuadraticFormAdditive) {
  const NoiseModel noise = NoiseModel::wiener(Eigen::Vector3d(0.5, 0.3, 0.2));
  std::mt19937_64 rng(3);
  auto g = random_gmap(rng, 2, 3, 0.0);
  const Eigen::MatrixXd expected = g.g2() * noise.q_eigenvalues().asDiagonal() * g.g2().transpose();
  const Eigen::Matrix2d any_m = Eigen::Matrix2d::Identity() * 7.0;
  EXPECT_LE((stm::noise_quadratic_form(g, noise, any_m, Eigen::Vector2d(3.0, -1.0)) - expected).cwiseAbs().maxCoeff(),
            1e-14);

  auto h = random_gmap(rng, 2, 3, 1.0);
  const Eigen::MatrixXd hx = h.g2() * noise.q_eigenvalues().asDiagonal() * h.g2().transpose();
  EXPECT_LE((stm::noise_quadratic_form(h, noise, Eigen::Matrix2d::Zero(), Eigen::Vector2d::Zero()) - hx)
                .cwiseAbs()
                .maxCoeff(),
            1e-14);
}

TEST(MomentOracle, QuadraticFormScalar) {
  const double a = 0.7, b = -0.3, mm = 1.9, m = 0.4;
  const auto g = AffineNoiseMap::scalar(a, b);
  const double phi = stm::noise_quadratic_form(g, kUnit, Eigen::MatrixXd::Constant(1, 1, mm),
                                               Eigen::VectorXd::Constant(1, m))(0, 0);
  EXPECT_NEAR(phi, a * a * mm + 2 * a * b * m + b * b, 1e-15);
  EXPECT_NEAR(stm::noise_quadratic_linear_part(g, kUnit, Eigen::MatrixXd::Constant(1, 1, mm))(0, 0), a * a * mm,
              1e-15);
}

TEST(MomentOracle, QuadraticFormMatchesExpectationOfOuterProduct) {
  // E[(G(X) dL)(G(X) dL)^T] / dt for X with second moment M and mean m, by index sums
  const NoiseModel noise = NoiseModel::wiener(Eigen::Vector2d(0.6, 0.1));
  std::mt19937_64 rng(8);
  const auto g = random_gmap(rng, 3, 2, 1.0);
  Eigen::MatrixXd l = Eigen::MatrixXd::Random(3, 3);
  const Eigen::MatrixXd mm = l * l.transpose();
  const Eigen::Vector3d m(0.2, -0.5, 1.0);
  Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int q = 0; q < 2; ++q) {
        double acc = g.g2()(i, q) * g.g2()(j, q);
        for (int a = 0; a < 3; ++a) {
          acc += (g.g1(i, a, q) * g.g2()(j, q) + g.g2()(i, q) * g.g1(j, a, q)) * m[a];
          for (int b = 0; b < 3; ++b) acc += g.g1(i, a, q) * g.g1(j, b, q) * mm(a, b);
        }
        expected(i, j) += noise.q_eigenvalues()[q] * acc;
      }
  EXPECT_LE((stm::noise_quadratic_form(g, noise, mm, m) - expected).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(MomentOracle, LyapunovDeterministicFlow) {
  const SpectralModel model(Eigen::Vector2d(1.0, 4.0), 1.0);
  const NoiseModel silent = NoiseModel::wiener(Eigen::Vector2d::Zero());
  Eigen::Matrix2d m0;
  m0 << 2.0, 0.5, 0.5, 1.0;
  const auto f = stm::lyapunov_solve(model, silent, AffineNoiseMap::zero(2, 2), Eigen::Vector2d(1.0, 1.0), m0, 64);
  for (int k = 0; k <= 64; ++k)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        const double expected = std::exp(-(model.eigenvalue(i) + model.eigenvalue(j)) * f.times[k]) * m0(i, j);
        EXPECT_NEAR(f.diagonal[k](i, j), expected, 1e-9 * std::abs(m0(i, j)));
      }
}

TEST(MomentOracle, LyapunovScalarOu) {
  const auto f = stm::lyapunov_solve(kScalar, kUnit, AffineNoiseMap::scalar(0.0, 1.0), Eigen::VectorXd::Zero(1),
                                     Eigen::MatrixXd::Zero(1, 1), 64);
  for (int k = 0; k <= 64; ++k) EXPECT_NEAR(f.diagonal[k](0, 0), (1.0 - std::exp(-2.0 * f.times[k])) / 2.0, 1e-10);
}

TEST(MomentOracle, LyapunovScalarMultiplicative) {
  const auto f = stm::lyapunov_solve(kScalar, kUnit, AffineNoiseMap::scalar(0.5, 0.5), Eigen::VectorXd::Ones(1),
                                     Eigen::MatrixXd::Ones(1, 1), 128);
  for (int k = 0; k <= 128; ++k)
    EXPECT_NEAR(f.diagonal[k](0, 0), scalar_second_moment(0.5, 0.5, 1.0, 1.0, f.times[k]), 1e-8);
}

TEST(MomentOracle, LyapunovMultimodeAgainstMatrixExponential) {
  const SpectralModel model(Eigen::Vector2d(1.0, 3.0), 1.5);
  const NoiseModel noise(Eigen::Vector3d(0.5, 0.25, 0.125), 0.5, 4.0);
  std::mt19937_64 rng(44);
  const auto g = random_gmap(rng, 2, 3, 0.4);
  const Eigen::Vector2d m0(1.0, -0.5);
  Eigen::Matrix2d c0;
  c0 << 0.3, 0.1, 0.1, 0.2;
  const Eigen::Matrix2d big_m0 = c0 + m0 * m0.transpose();
  const auto f = stm::lyapunov_solve(model, noise, g, m0, big_m0, 96, 8);

  const Eigen::MatrixXd z = augmented_generator(model, noise, g);
  Eigen::VectorXd z0(7);
  z0 << big_m0(0, 0), big_m0(0, 1), big_m0(1, 0), big_m0(1, 1), m0[0], m0[1], 1.0;
  for (int k = 0; k <= 96; k += 8) {
    const Eigen::MatrixXd step = (z * f.times[k]).exp();
    const Eigen::VectorXd zt = step * z0;
    for (int i = 0; i < 2; ++i) {
      EXPECT_NEAR(f.mean(k, i), zt[4 + i], 1e-12);
      for (int j = 0; j < 2; ++j) EXPECT_NEAR(f.diagonal[k](i, j), zt[2 * i + j], 1e-9);
    }
    EXPECT_EQ(f.diagonal[k], f.diagonal[k].transpose());
  }
}

TEST(MomentOracle, LyapunovErrors) {
  Eigen::Matrix2d asym;
  asym << 1.0, 0.2, 0.0, 1.0;
  const SpectralModel model(Eigen::Vector2d(1.0, 4.0), 1.0);
  const NoiseModel noise = NoiseModel::wiener(Eigen::Vector2d(1.0, 1.0));
  const auto g = AffineNoiseMap::zero(2, 2);
  EXPECT_THROW(stm::lyapunov_solve(model, noise, g, Eigen::Vector2d::Zero(), asym, 4), stm::InvalidArgument);
  EXPECT_THROW(stm::lyapunov_solve(model, noise, g, Eigen::Vector2d::Zero(), Eigen::Matrix2d::Zero(), 4, 2),
               stm::InvalidArgument);
  EXPECT_THROW(stm::lyapunov_solve(model, noise, g, Eigen::Vector3d::Zero(), Eigen::Matrix2d::Zero(), 4),
               stm::InvalidArgument);
  EXPECT_THROW(stm::lyapunov_solve(kScalar, noise, g, Eigen::Vector2d::Zero(), Eigen::Matrix2d::Zero(), 4),
               stm::InvalidArgument);
}

TEST(MomentOracle, TwoTimeDiagonalBlocks) {
  const SpectralModel model(Eigen::Vector2d(1.0, 4.0), 1.0);
  const NoiseModel noise = NoiseModel::wiener(Eigen::Vector2d(1.0, 0.5));
  std::mt19937_64 rng(2);
  const auto g = random_gmap(rng, 2, 2, 0.3);
  const auto f = stm::two_time_extend(
      model, stm::lyapunov_solve(model, noise, g, Eigen::Vector2d(1.0, 0.0), Eigen::Matrix2d::Identity(), 6));
  ASSERT_TRUE(f.two_time.has_value());
  const Eigen::MatrixXd& tt = *f.two_time;
  for (int k = 0; k <= 6; ++k) EXPECT_EQ(Eigen::MatrixXd(tt.block(2 * k, 2 * k, 2, 2)), f.diagonal[k]);
  EXPECT_EQ(tt, tt.transpose());
}

TEST(MomentOracle, TwoTimeNoNoise) {
  const SpectralModel model(Eigen::Vector2d(1.0, 4.0), 1.0);
  const NoiseModel silent = NoiseModel::wiener(Eigen::Vector2d::Zero());
  Eigen::Matrix2d m0;
  m0 << 1.0, 0.3, 0.3, 2.0;
  const auto f = stm::two_time_extend(
      model, stm::lyapunov_solve(model, silent, AffineNoiseMap::zero(2, 2), Eigen::Vector2d::Zero(), m0, 64));
  const Eigen::MatrixXd& tt = *f.two_time;
  for (int k = 0; k <= 64; k += 8)
    for (int l = 0; l <= 64; l += 8)
      for (int n = 0; n < 2; ++n)
        for (int m = 0; m < 2; ++m) {
          const double expected = std::exp(-model.eigenvalue(n) * f.times[k]) *
                                  std::exp(-model.eigenvalue(m) * f.times[l]) * m0(n, m);
          EXPECT_NEAR(tt(2 * k + n, 2 * l + m), expected, 1e-9);
        }
}

TEST(MomentOracle, TwoTimeScalarOu) {
  const auto f = stm::two_time_extend(
      kScalar, stm::lyapunov_solve(kScalar, kUnit, AffineNoiseMap::scalar(0.0, 1.0), Eigen::VectorXd::Zero(1),
                                   Eigen::MatrixXd::Zero(1, 1), 16));
  for (int k = 0; k <= 16; ++k)
    for (int l = k; l <= 16; ++l) {
      const double s = f.times[k], t = f.times[l];
      EXPECT_NEAR((*f.two_time)(k, l), std::exp(-(t - s)) * (1.0 - std::exp(-2.0 * s)) / 2.0, 1e-10);
    }
}

TEST(MomentOracle, TwoTimeRequiresDiagonal) {
  stm::MomentField empty;
  empty.times = {0.0, 1.0};
  empty.mean = Eigen::MatrixXd::Zero(2, 1);
  EXPECT_THROW(stm::two_time_extend(kScalar, empty), stm::InvalidArgument);
}
