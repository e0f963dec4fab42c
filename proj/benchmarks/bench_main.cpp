#include <benchmark/benchmark.h>

#include <random>

#include "stm/monte_carlo.hpp"
#include "stm/tensor_core.hpp"
#include "stm/variational_solver.hpp"

namespace {

struct Problem {
  stm::SpectralModel model;
  stm::NoiseModel noise;
  stm::AffineNoiseMap gmap;
  Eigen::VectorXd x0;
};

Problem multimode(int n) {
  Eigen::VectorXd gamma(n);
  for (int m = 0; m < n; ++m) gamma[m] = std::ldexp(1.0, -(m + 1));
  Problem p{stm::SpectralModel::dirichlet_laplacian(n, M_PI), stm::NoiseModel(gamma, 0.5, 4.0),
            stm::AffineNoiseMap::zero(n, n), Eigen::VectorXd::Ones(n)};
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  std::vector<Eigen::MatrixXd> g1(n, Eigen::MatrixXd(n, n));
  for (auto& s : g1)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) s(i, j) = z(rng);
  Eigen::MatrixXd g2(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g2(i, j) = 0.5 * z(rng);
  stm::AffineNoiseMap raw(std::move(g1), g2);
  p.gmap = raw.with_g1_scaled(0.5 / stm::g1_v_to_hs_norm(raw, p.model, p.noise));
  return p;
}

void BM_PicardSecondMoment(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int k = static_cast<int>(state.range(1));
  const Problem p = multimode(n);
  const auto sys = stm::assemble_per_mode(p.model, stm::TimeGrid::uniform(k, 1.0));
  const auto mean = stm::solve_mean(sys, p.x0);
  const auto f = stm::rhs_second_moment(sys, p.noise, p.gmap, mean, p.x0 * p.x0.transpose());
  for (auto _ : state) {
    auto r = stm::picard_solve_second_moment(sys, p.noise, p.gmap, f);
    benchmark::DoNotOptimize(r.solution.data().data());
  }
}
BENCHMARK(BM_PicardSecondMoment)->Args({1, 128})->Args({4, 64})->Args({8, 64})->Unit(benchmark::kMillisecond);

void BM_TensorSolve(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int k = static_cast<int>(state.range(1));
  const Problem p = multimode(n);
  const auto sys = stm::assemble_per_mode(p.model, stm::TimeGrid::uniform(k, 1.0));
  stm::SpaceTimeLoad f(k, n);
  f.data().setRandom();
  for (auto _ : state) {
    auto u = stm::solve_tensor_operator(sys, f);
    benchmark::DoNotOptimize(u.data().data());
  }
}
BENCHMARK(BM_TensorSolve)->Args({4, 64})->Args({4, 256})->Unit(benchmark::kMicrosecond);

void BM_SimulatePath(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Problem p = multimode(n);
  stm::Rng rng = stm::make_stream(7, 0);
  for (auto _ : state) {
    auto path = stm::simulate_path(p.model, p.noise, p.gmap, p.x0, 64, rng, 8);
    benchmark::DoNotOptimize(path.data());
  }
  state.SetItemsProcessed(state.iterations() * 64 * 8);
}
BENCHMARK(BM_SimulatePath)->Arg(1)->Arg(4)->Arg(8);

void BM_TensorNorms(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const stm::Tensor2 x(Eigen::MatrixXd::Random(d, d));
  for (auto _ : state) {
    benchmark::DoNotOptimize(stm::projective_norm(x));
    benchmark::DoNotOptimize(stm::injective_norm(x));
    benchmark::DoNotOptimize(stm::hilbert_norm(x));
  }
}
BENCHMARK(BM_TensorNorms)->Arg(4)->Arg(8)->Arg(32);

}  // namespace

BENCHMARK_MAIN();
