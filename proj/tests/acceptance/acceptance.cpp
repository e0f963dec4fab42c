// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <exception>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "stm/config.hpp"
#include "stm/levy_driver.hpp"
#include "stm/moment_oracle.hpp"
#include "stm/monte_carlo.hpp"
#include "stm/spectral_model.hpp"
#include "stm/tensor_core.hpp"
#include "stm/variational_solver.hpp"

using namespace stm;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

void add(Outcome& o, bool ok, const std::string& text) {
  o.pass = o.pass && ok;
  if (!o.detail.empty()) o.detail += "; ";
  o.detail += text + (ok ? "" : " [x]");
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int threads() { return std::max(1u, std::thread::hardware_concurrency()); }

ExperimentConfig config(const std::string& name) { return load_config(std::string(STM_SOURCE_DIR) + "/configs/" + name); }

struct Solved {
  PerModeSystem system;
  Eigen::MatrixXd mean;
  PicardResult second;
  PicardResult covariance;
};

Solved solve_all(const Experiment& e, int steps) {
  PerModeSystem system = assemble_per_mode(e.model, TimeGrid::uniform(steps, e.model.horizon()));
  Eigen::MatrixXd mean = solve_mean(system, e.initial.mean());
  PicardOptions opt;
  opt.threads = threads();
  PicardResult second = picard_solve_second_moment(
      system, e.noise, e.gmap, rhs_second_moment(system, e.noise, e.gmap, mean, e.initial.second_moment()), opt);
  PicardResult cov =
      solve_covariance(system, e.noise, e.gmap, rhs_covariance(system, e.noise, e.gmap, mean, e.initial.covariance()), opt);
  return {std::move(system), std::move(mean), std::move(second), std::move(cov)};
}

double z_of(double x, double ref, double se) {
  if (se > 0.0) return (x - ref) / se;
  return std::abs(x - ref) <= 1e-12 * (1.0 + std::abs(ref)) ? 0.0 : INFINITY;
}

// diagonal blocks D_k against M(t_{k+1}), relative to the largest oracle entry
double diagonal_rel_error(const SpaceTimeMoment& u, const MomentField& oracle) {
  double err = 0.0, scale = 0.0;
  for (int k = 0; k < u.steps(); ++k) {
    const Eigen::MatrixXd& ref = oracle.diagonal[std::size_t(k + 1)];
    err = std::max(err, (u.time_diagonal(k) - ref).cwiseAbs().maxCoeff());
    scale = std::max(scale, ref.cwiseAbs().maxCoeff());
  }
  return err / scale;
}

double ou_exact(double s, double t) { return 0.5 * (std::exp(-std::abs(t - s)) - std::exp(-(s + t))); }

Outcome scalar_ou() {
  Outcome o;
  const auto start = Clock::now();
  const ExperimentConfig c = config("scalar_ou.json");
  const Experiment e = build_experiment(c);

  auto grid_error = [&](int K, double* scale_out) {
    const Solved s = solve_all(e, K);
    const double h = e.model.horizon() / K;
    double err = 0.0, scale = 0.0;
    for (int k = 0; k < K; ++k)
      for (int l = 0; l < K; ++l) {
        const double exact = ou_exact((k + 1) * h, (l + 1) * h);
        err = std::max(err, std::abs(s.second.solution.at(k, 0, l, 0) - exact));
        scale = std::max(scale, std::abs(exact));
      }
    *scale_out = scale;
    return err;
  };
  double scale64 = 0.0, scale128 = 0.0;
  const double err64 = grid_error(64, &scale64);
  const double err128 = grid_error(128, &scale128);
  const double rel = err128 / scale128;
  const double ratio = err64 / err128;
  add(o, rel <= 0.02, fmt("K=128 rel err %.4g <= 0.02", rel));
  add(o, ratio >= 1.6 && ratio <= 2.4, fmt("err(64)/err(128) %.3f in [1.6, 2.4]", ratio));

  SamplingPlan plan;
  plan.steps = 128;
  plan.substeps = c.mc.substeps;
  plan.observation = Observation::nodes;
  SimulationSettings settings;
  settings.paths = 100000;
  settings.seed = 20261015;
  settings.threads = threads();
  const MomentEstimate est = simulate_moments(e.model, e.noise, e.gmap, e.initial, plan, settings);
  const double h = e.model.horizon() / plan.steps;
  double max_z = 0.0;
  long outside = 0;
  for (int k = 0; k <= plan.steps; ++k)
    for (int l = 0; l <= plan.steps; ++l) {
      const double z = z_of(est.second_at(k, 0, l, 0), ou_exact(k * h, l * h), est.second_moment_se(k, l));
      max_z = std::max(max_z, std::abs(z));
      outside += std::abs(z) > 3.0;
    }
  add(o, outside == 0,
      fmt("MC 1e5 paths: %ld of %d entries beyond 3 SE (max |z| %.3f)", outside, (plan.steps + 1) * (plan.steps + 1),
          max_z));
  const double secs = seconds_since(start);
  add(o, secs <= 120.0, fmt("%.1f s <= 120 s", secs));
  return o;
}

Outcome scalar_multiplicative() {
  Outcome o;
  const auto start = Clock::now();
  const Experiment e = build_experiment(config("scalar_multiplicative.json"));
  const double norm = g1_v_to_hs_norm(e.gmap, e.model, e.noise);
  add(o, norm == 0.5, fmt("g1 norm %.17g == 0.5", norm));
  const Solved s = solve_all(e, 128);
  const auto ratios = s.second.update_ratios();
  const double worst = ratios.empty() ? 0.0 : *std::max_element(ratios.begin(), ratios.end());
  add(o, worst <= 0.35, fmt("Picard %d iterations, max update ratio %.4f <= 0.35", s.second.iterations, worst));
  const MomentField oracle =
      lyapunov_solve(e.model, e.noise, e.gmap, e.initial.mean(), e.initial.second_moment(), 128, 8);
  const double rel = diagonal_rel_error(s.second.solution, oracle);
  add(o, rel <= 0.02, fmt("diagonal vs Lyapunov rel err %.4g <= 0.02", rel));
  const double secs = seconds_since(start);
  add(o, secs <= 120.0, fmt("%.1f s <= 120 s", secs));
  return o;
}

Outcome multimode() {
  Outcome o;
  const auto start = Clock::now();
  const ExperimentConfig c = config("multimode_levy.json");
  const Experiment e = build_experiment(c);
  const int K = c.time.steps;
  const int N = e.model.dim();
  add(o, true, fmt("g1 norm %.6f", g1_v_to_hs_norm(e.gmap, e.model, e.noise)));
  const Solved s = solve_all(e, K);

  SamplingPlan plan;
  plan.steps = K;
  plan.substeps = c.mc.substeps;
  plan.observation = Observation::cell_averages;
  SimulationSettings settings;
  settings.paths = 10000;
  settings.seed = *c.mc.seed;
  settings.threads = threads();
  const MomentEstimate est = simulate_moments(e.model, e.noise, e.gmap, e.initial, plan, settings);
  long within = 0, total = 0;
  for (int k = 0; k < K; ++k)
    for (int n = 0; n < N; ++n)
      for (int l = 0; l < K; ++l)
        for (int m = 0; m < N; ++m) {
          const double z = z_of(est.covariance_at(k, n, l, m), s.covariance.solution.at(k, n, l, m),
                                est.covariance_se(est.index(k, n), est.index(l, m)));
          within += std::abs(z) <= 3.0;
          ++total;
        }
  const double fraction = double(within) / double(total);
  add(o, fraction >= 0.99, fmt("covariance within 3 SE on %.4f of %ld entries >= 0.99", fraction, total));

  const MomentField oracle =
      lyapunov_solve(e.model, e.noise, e.gmap, e.initial.mean(), e.initial.second_moment(), K, 8);
  const double rel = diagonal_rel_error(s.second.solution, oracle);
  add(o, rel <= 0.03, fmt("diagonal vs Lyapunov rel err %.4g <= 0.03", rel));
  const double secs = seconds_since(start);
  add(o, secs <= 600.0, fmt("%.1f s <= 600 s", secs));
  return o;
}

Outcome tensor_norms() {
  Outcome o;
  std::mt19937_64 rng(4004);
  std::uniform_int_distribution<int> size(1, 8);
  std::normal_distribution<double> normal;
  int chain_violations = 0;
  double witness_gap = 0.0;
  double witness_dual = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Eigen::MatrixXd a(size(rng), size(rng));
    for (Eigen::Index j = 0; j < a.size(); ++j) a.data()[j] = normal(rng);
    const Tensor2 x(a);
    const double inj = injective_norm(x), hs = hilbert_norm(x), proj = projective_norm(x);
    const double slack = 1e-12 * proj;
    chain_violations += !(inj <= hs + slack && hs <= proj + slack);
    const Tensor2 w = duality_witness(x);
    witness_gap = std::max(witness_gap, std::abs(proj - dual_pair(x, w)));
    witness_dual = std::max(witness_dual, injective_norm(w));
  }
  add(o, chain_violations == 0, fmt("chain violations %d of 1000", chain_violations));
  add(o, witness_gap <= 1e-10, fmt("witness gap %.3g <= 1e-10", witness_gap));
  add(o, witness_dual <= 1.0 + 1e-12, fmt("witness injective norm %.15f <= 1", witness_dual));

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double kernel_gap = 0.0;
  for (int i = 0; i < 100; ++i) {
    Eigen::VectorXd gamma(size(rng));
    for (Eigen::Index m = 0; m < gamma.size(); ++m) gamma[m] = i == 0 ? std::ldexp(1.0, -int(m + 1)) : unit(rng);
    const NoiseModel noise(gamma, 1.0, 0.0);
    kernel_gap = std::max(kernel_gap, std::abs(projective_norm(noise.covariance_kernel()) - gamma.sum()));
  }
  add(o, kernel_gap <= 1e-12, fmt("|projective(q) - tr Q| %.3g <= 1e-12", kernel_gap));
  return o;
}

Outcome ito_isometry() {
  Outcome o;
  const int K = 16;
  const double T = 1.0;
  auto t = [&](int k) { return T * k / K; };
  auto runs_within = [&](const NoiseModel& noise, const Eigen::MatrixXd& v1, const Eigen::MatrixXd& v2,
                         const std::vector<Eigen::MatrixXd>& phi, std::uint64_t base, double* worst) {
    int ok = 0;
    *worst = 0.0;
    for (int r = 0; r < 20; ++r) {
      const IsometryCheck c = ito_isometry_check(noise, v1, v2, phi, T, 100000, base + std::uint64_t(r));
      ok += std::abs(c.z_score) < 3.0;
      *worst = std::max(*worst, std::abs(c.z_score));
    }
    return ok;
  };

  {
    const NoiseModel noise(Eigen::VectorXd::Ones(1), 0.5, 4.0);
    Eigen::MatrixXd v1(K + 1, 1), v2(K + 1, 1);
    std::vector<Eigen::MatrixXd> phi;
    for (int k = 0; k <= K; ++k) {
      v1(k, 0) = 1.0 + 0.5 * t(k);
      v2(k, 0) = std::exp(-t(k));
      if (k < K) phi.push_back(Eigen::MatrixXd::Constant(1, 1, 1.0 + t(k)));
    }
    double worst = 0.0;
    const int ok = runs_within(noise, v1, v2, phi, 50000, &worst);
    add(o, ok >= 19, fmt("scalar: %d/20 runs with |z| < 3 (max |z| %.2f)", ok, worst));
  }
  {
    const NoiseModel noise(Eigen::Vector2d(0.5, 0.25), 0.5, 4.0);
    Eigen::MatrixXd v1(K + 1, 2), v2(K + 1, 2);
    std::vector<Eigen::MatrixXd> phi;
    for (int k = 0; k <= K; ++k) {
      v1.row(k) << 1.0, t(k);
      v2.row(k) << std::cos(t(k)), std::sin(t(k)) + 0.5;
      if (k < K) {
        Eigen::Matrix2d p;
        p << 1.0, t(k), 0.5, 1.0 - t(k);
        phi.push_back(p);
      }
    }
    double worst = 0.0;
    const int ok = runs_within(noise, v1, v2, phi, 60000, &worst);
    add(o, ok >= 19, fmt("2-mode: %d/20 runs with |z| < 3 (max |z| %.2f)", ok, worst));
  }
  return o;
}

Outcome weak_mild() {
  Outcome o;
  const Experiment e = build_experiment(config("scalar_multiplicative.json"));
  const Eigen::VectorXd x0 = e.initial.mean();
  std::vector<double> rms;
  for (int K : {32, 64, 128}) {
    Eigen::MatrixXd v(K + 1, 1);
    for (int k = 0; k <= K; ++k) v(k, 0) = std::cos(0.5 * M_PI * k / K);
    v(K, 0) = 0.0;
    double sq = 0.0;
    for (int p = 0; p < 1000; ++p) {
      Rng rng = make_stream(6006, std::uint64_t(p));
      Eigen::MatrixXd inc;
      const Eigen::MatrixXd path = simulate_path(e.model, e.noise, e.gmap, x0, K, rng, 1, &inc);
      const double r = weak_identity_residual(path, v, e.model, e.gmap, inc);
      sq += r * r;
    }
    rms.push_back(std::sqrt(sq / 1000.0));
  }
  const bool monotone = rms[1] < rms[0] && rms[2] < rms[1];
  add(o, monotone, fmt("RMS residual K=32,64,128: %.3e, %.3e, %.3e decreasing", rms[0], rms[1], rms[2]));
  return o;
}

Outcome covariance_identity() {
  Outcome o;
  for (const char* name : {"scalar_ou.json", "scalar_multiplicative.json", "multimode_levy.json"}) {
    const ExperimentConfig c = config(name);
    const Solved s = solve_all(build_experiment(c), c.time.steps);
    const SpaceTimeMoment outer = mean_outer(s.mean);
    const double gap =
        (s.covariance.solution.data() - (s.second.solution.data() - outer.data())).cwiseAbs().maxCoeff();
    add(o, gap <= 1e-8, fmt("%s %.3g <= 1e-8", name, gap));
  }
  return o;
}

Outcome inf_sup() {
  Outcome o;
  const Experiment e = build_experiment(config("inf_sup.json"));
  const std::vector<int> steps{16, 32, 64};
  Eigen::MatrixXd values(e.model.dim(), Eigen::Index(steps.size()));
  for (std::size_t j = 0; j < steps.size(); ++j)
    values.col(Eigen::Index(j)) =
        discrete_inf_sup(assemble_per_mode(e.model, TimeGrid::uniform(steps[j], e.model.horizon()))).per_mode_min;
  for (int n = 0; n < e.model.dim(); ++n) {
    const double lo = values.row(n).minCoeff(), hi = values.row(n).maxCoeff();
    const double variation = (hi - lo) / hi;
    add(o, lo >= 0.2 && variation <= 0.10,
        fmt("lambda=%g K=16,32,64: %.4f, %.4f, %.4f (min >= 0.2, variation %.1f%% <= 10%%)", e.model.eigenvalue(n),
            values(n, 0), values(n, 1), values(n, 2), 100.0 * variation));
  }
  return o;
}

Outcome smoothing() {
  Outcome o;
  std::mt19937_64 rng(9009);
  std::uniform_real_distribution<double> exponent(-4.0, 4.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  int above = 0;
  for (int i = 0; i < 1000; ++i) {
    const double lambda = std::pow(10.0, exponent(rng));
    const double horizon = std::pow(10.0, exponent(rng));
    const SpectralModel model(Eigen::VectorXd::Constant(1, lambda), horizon);
    const double value = model.smoothing_integral(0, unit(rng) * horizon);
    above += value > 0.5;
    worst = std::max(worst, value);
  }
  add(o, above == 0, fmt("%d of 1000 above 0.5 (max %.17g)", above, worst));
  double gap = 0.0;
  for (double lambda : {1e-2, 1.0, 1e2, 1e4})
    for (double product : {50.0, 1e3, 1e6}) {
      const double upper = product / lambda;
      const SpectralModel model(Eigen::VectorXd::Constant(1, lambda), upper);
      gap = std::max(gap, std::abs(model.smoothing_integral(0, upper) - 0.5));
    }
  add(o, gap <= 1e-12, fmt("|value - 0.5| for upper*lambda >= 50: %.3g <= 1e-12", gap));
  return o;
}

Outcome mean_order() {
  Outcome o;
  const SpectralModel model(Eigen::VectorXd::Ones(1), 1.0);
  const Eigen::VectorXd x0 = Eigen::VectorXd::Ones(1);
  std::vector<double> err;
  for (int K : {32, 64, 128, 256}) {
    const Eigen::MatrixXd m = solve_mean(assemble_per_mode(model, TimeGrid::uniform(K, 1.0)), x0);
    double e = 0.0;
    for (int k = 0; k < K; ++k) e = std::max(e, std::abs(m(k, 0) - std::exp(-double(k + 1) / K)));
    err.push_back(e);
  }
  std::string orders;
  bool ok = true;
  for (std::size_t i = 1; i < err.size(); ++i) {
    const double p = std::log2(err[i - 1] / err[i]);
    ok = ok && std::abs(p - 1.0) <= 0.3;
    orders += fmt(i == 1 ? "%.3f" : ", %.3f", p);
  }
  add(o, ok, "observed orders " + orders + " in [0.7, 1.3]");
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"scalar additive OU", scalar_ou},
      {"scalar multiplicative", scalar_multiplicative},
      {"multimode Levy cross-validation", multimode},
      {"tensor norms", tensor_norms},
      {"weak Ito isometry", ito_isometry},
      {"weak/mild identity", weak_mild},
      {"covariance identity", covariance_identity},
      {"discrete inf-sup", inf_sup},
      {"smoothing integral", smoothing},
      {"mean solver order", mean_order},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& ex) {
      o.pass = false;
      o.detail = std::string("exception: ") + ex.what();
    }
    failed += !o.pass;
    std::printf("%s  %2zu  %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
