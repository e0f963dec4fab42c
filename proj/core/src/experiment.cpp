#include "stm/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stm/config.hpp"
#include "stm/error.hpp"
#include "stm/moment_oracle.hpp"
#include "stm/monte_carlo.hpp"
#include "stm/variational_solver.hpp"

#ifndef STM_VERSION
#define STM_VERSION "unknown"
#endif

namespace stm {

using nlohmann::json;
namespace fs = std::filesystem;

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : file_(std::fopen(path.c_str(), "w")), columns_(header.size()) {
  if (!file_) throw std::runtime_error("cannot open '" + path + "' for writing");
  for (std::size_t i = 0; i < header.size(); ++i) {
    std::fprintf(file_, "%s%s", i ? "," : "", header[i].c_str());
  }
  std::fputc('\n', file_);
}

CsvWriter::~CsvWriter() {
  if (file_) std::fclose(file_);
}

void CsvWriter::row(const std::vector<double>& values) {
  if (values.size() != columns_) throw InvalidArgument("CsvWriter::row: column count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::fprintf(file_, "%s%.17g", i ? "," : "", values[i]);
  }
  std::fputc('\n', file_);
}

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"simulate",         "solve-mean", "solve-moment",
                                              "solve-covariance", "validate",   "inf-sup"};
  return names;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Context {
  ExperimentConfig config;
  Experiment experiment;
  fs::path out;
  int threads;
  std::ostream& log;
  json report;

  std::string file(const std::string& name) {
    report["files"].push_back(name);
    return (out / name).string();
  }
};

void write_four_index(Context& ctx, const std::string& name, const SpaceTimeArray& u, const TimeGrid& grid) {
  CsvWriter csv(ctx.file(name), {"k", "t_left", "n", "l", "s_left", "m", "value"});
  for (int n = 0; n < u.modes(); ++n)
    for (int k = 0; k < u.steps(); ++k)
      for (int m = 0; m < u.modes(); ++m)
        for (int l = 0; l < u.steps(); ++l)
          csv.row({double(k), grid.node(k), double(n), double(l), grid.node(l), double(m), u.at(k, n, l, m)});
}

void write_trace(Context& ctx, const std::vector<double>& updates) {
  CsvWriter csv(ctx.file("picard_trace.csv"), {"iteration", "update", "ratio"});
  for (std::size_t j = 0; j < updates.size(); ++j) {
    const double ratio = j == 0 || updates[j - 1] == 0.0 ? std::numeric_limits<double>::quiet_NaN()
                                                         : updates[j] / updates[j - 1];
    csv.row({double(j + 1), updates[j], ratio});
  }
}

json picard_json(const PicardResult& r) {
  return {{"iterations", r.iterations},
          {"updates", r.updates},
          {"update_ratios", r.update_ratios()},
          {"g1_v_to_hs_norm", r.g1_norm},
          {"warnings", r.warnings}};
}

PicardOptions picard_options(const Context& ctx) {
  PicardOptions o;
  o.tol = ctx.config.solver.picard_tol;
  o.max_iter = ctx.config.solver.picard_max_iter;
  o.threads = ctx.threads;
  return o;
}

std::uint64_t require_seed(const ExperimentConfig& c) {
  if (!c.mc.seed) throw ConfigError("mc.seed", "a seed is required for Monte Carlo runs");
  return *c.mc.seed;
}

SamplingPlan sampling_plan(const ExperimentConfig& c) {
  SamplingPlan plan;
  plan.steps = c.time.steps;
  plan.substeps = c.mc.substeps;
  plan.observation = c.mc.observation == "nodes" ? Observation::nodes : Observation::cell_averages;
  return plan;
}

MomentEstimate run_mc(Context& ctx) {
  const auto& e = ctx.experiment;
  SimulationSettings settings;
  settings.paths = ctx.config.mc.paths;
  settings.seed = require_seed(ctx.config);
  settings.threads = ctx.threads;
  const auto start = Clock::now();
  MomentEstimate est = simulate_moments(e.model, e.noise, e.gmap, e.initial, sampling_plan(ctx.config), settings);
  ctx.report["timings"]["monte_carlo_s"] = seconds_since(start);
  ctx.report["monte_carlo"] = {{"paths", est.samples},
                               {"batches", est.batches},
                               {"seed", settings.seed},
                               {"substeps", ctx.config.mc.substeps},
                               {"observation", ctx.config.mc.observation}};
  return est;
}

// Time of MC point k: node t_k, or the midpoint of cell k for cell averages.
double point_time(const ExperimentConfig& c, double horizon, int k) {
  const double dt = horizon / c.time.steps;
  return c.mc.observation == "nodes" ? k * dt : (k + 0.5) * dt;
}

void write_estimate(Context& ctx, const MomentEstimate& est) {
  const double T = ctx.experiment.model.horizon();
  {
    CsvWriter csv(ctx.file("mc_mean.csv"), {"point", "t", "n", "mean", "se"});
    for (int k = 0; k < est.points; ++k)
      for (int n = 0; n < est.state_dim; ++n)
        csv.row({double(k), point_time(ctx.config, T, k), double(n), est.mean_at(k, n), est.mean_se[est.index(k, n)]});
  }
  CsvWriter csv(ctx.file("mc_moments.csv"),
                {"k", "t", "n", "l", "s", "m", "second_moment", "second_moment_se", "covariance", "covariance_se"});
  for (int k = 0; k < est.points; ++k)
    for (int n = 0; n < est.state_dim; ++n)
      for (int l = 0; l < est.points; ++l)
        for (int m = 0; m < est.state_dim; ++m) {
          const auto i = est.index(k, n);
          const auto j = est.index(l, m);
          csv.row({double(k), point_time(ctx.config, T, k), double(n), double(l), point_time(ctx.config, T, l),
                   double(m), est.second_moment(i, j), est.second_moment_se(i, j), est.covariance(i, j),
                   est.covariance_se(i, j)});
        }
}

double z_score(double estimate, double reference, double se) {
  const double diff = estimate - reference;
  if (se > 0.0) return diff / se;
  return std::abs(diff) <= 1e-12 * (1.0 + std::abs(reference)) ? 0.0 : std::numeric_limits<double>::infinity();
}

void add_check(Context& ctx, const std::string& name, double value, const std::string& relation, double threshold,
               bool pass) {
  ctx.report["checks"].push_back(
      {{"name", name}, {"value", value}, {"relation", relation}, {"threshold", threshold}, {"pass", pass}});
  ctx.log << (pass ? "PASS " : "FAIL ") << name << ": " << value << " " << relation << " " << threshold << "\n";
}

json base_diagnostics(const Experiment& e) {
  return {{"g1_v_to_hs_norm", g1_v_to_hs_norm(e.gmap, e.model, e.noise)},
          {"trace_q", e.noise.trace()},
          {"jump_size", e.noise.jump_size()}};
}

ExitStatus cmd_simulate(Context& ctx) {
  write_estimate(ctx, run_mc(ctx));
  return ExitStatus::ok;
}

ExitStatus cmd_solve_mean(Context& ctx) {
  const auto& e = ctx.experiment;
  const TimeGrid grid = TimeGrid::uniform(e.steps, e.model.horizon());
  const PerModeSystem system = assemble_per_mode(e.model, grid);
  const Eigen::MatrixXd coeffs = solve_mean(system, e.initial.mean());
  const Eigen::MatrixXd exact = mean_exact(e.model, e.initial.mean(), e.steps);
  {
    CsvWriter csv(ctx.file("mean_coefficients.csv"), {"k", "t_left", "t_right", "n", "value"});
    for (int k = 0; k < e.steps; ++k)
      for (int n = 0; n < e.model.dim(); ++n) csv.row({double(k), grid.node(k), grid.node(k + 1), double(n), coeffs(k, n)});
  }
  // Cell k is compared with the exact mean at its right endpoint t_{k+1}.
  double max_err = 0.0;
  {
    CsvWriter csv(ctx.file("mean_error.csv"), {"k", "t", "n", "solver", "exact", "abs_error"});
    for (int k = 0; k < e.steps; ++k)
      for (int n = 0; n < e.model.dim(); ++n) {
        const double err = std::abs(coeffs(k, n) - exact(k + 1, n));
        max_err = std::max(max_err, err);
        csv.row({double(k + 1), grid.node(k + 1), double(n), coeffs(k, n), exact(k + 1, n), err});
      }
  }
  ctx.report["mean"] = {{"sup_node_error", max_err}, {"comparison", "cell k vs exact mean at t_{k+1}"}};
  return ExitStatus::ok;
}

struct Solved {
  PerModeSystem system;
  Eigen::MatrixXd mean;
  PicardResult second;
  PicardResult covariance;
};

PicardResult picard_logged(Context& ctx, const char* label, const PerModeSystem& system, const SpaceTimeLoad& load,
                           bool covariance) {
  const auto& e = ctx.experiment;
  const auto start = Clock::now();
  PicardResult r = covariance ? solve_covariance(system, e.noise, e.gmap, load, picard_options(ctx))
                              : picard_solve_second_moment(system, e.noise, e.gmap, load, picard_options(ctx));
  ctx.report["timings"][std::string(label) + "_s"] = seconds_since(start);
  ctx.report[label] = picard_json(r);
  for (const auto& w : r.warnings) ctx.log << "warning: " << label << ": " << w << "\n";
  return r;
}

ExitStatus cmd_solve_moment(Context& ctx, bool covariance) {
  const auto& e = ctx.experiment;
  const TimeGrid grid = TimeGrid::uniform(e.steps, e.model.horizon());
  const PerModeSystem system = assemble_per_mode(e.model, grid);
  const Eigen::MatrixXd mean = solve_mean(system, e.initial.mean());
  const SpaceTimeLoad load =
      covariance ? rhs_covariance(system, e.noise, e.gmap, mean, e.initial.covariance())
                 : rhs_second_moment(system, e.noise, e.gmap, mean, e.initial.second_moment());
  const char* label = covariance ? "picard_covariance" : "picard_second_moment";
  const PicardResult r = picard_logged(ctx, label, system, load, covariance);
  write_trace(ctx, r.updates);
  write_four_index(ctx, covariance ? "covariance.csv" : "second_moment.csv", r.solution, grid);
  ctx.log << label << ": " << r.iterations << " iteration(s)\n";
  return ExitStatus::ok;
}

ExitStatus cmd_validate(Context& ctx) {
  const auto& e = ctx.experiment;
  const auto& v = ctx.config.validate;
  const int K = e.steps;
  const int N = e.model.dim();
  const TimeGrid grid = TimeGrid::uniform(K, e.model.horizon());
  const PerModeSystem system = assemble_per_mode(e.model, grid);
  const Eigen::MatrixXd mean = solve_mean(system, e.initial.mean());
  const PicardResult second = picard_logged(
      ctx, "picard_second_moment", system,
      rhs_second_moment(system, e.noise, e.gmap, mean, e.initial.second_moment()), false);
  const PicardResult cov = picard_logged(
      ctx, "picard_covariance", system, rhs_covariance(system, e.noise, e.gmap, mean, e.initial.covariance()), true);

  auto start = Clock::now();
  MomentField oracle = two_time_extend(
      e.model, lyapunov_solve(e.model, e.noise, e.gmap, e.initial.mean(), e.initial.second_moment(), K,
                              v.oracle_substeps));
  ctx.report["timings"]["oracle_s"] = seconds_since(start);
  const Eigen::MatrixXd& ref = *oracle.two_time;
  auto ref_at = [&](int k, int n, int l, int m) { return ref(Eigen::Index(k) * N + n, Eigen::Index(l) * N + m); };

  bool pass = true;

  // Mean: cell k against the exact mean at t_{k+1}.
  double mean_err = 0.0;
  double mean_scale = 0.0;
  {
    CsvWriter csv(ctx.file("mean_comparison.csv"), {"k", "t", "n", "variational", "exact", "abs_error"});
    for (int k = 0; k < K; ++k)
      for (int n = 0; n < N; ++n) {
        const double err = std::abs(mean(k, n) - oracle.mean(k + 1, n));
        mean_err = std::max(mean_err, err);
        mean_scale = std::max(mean_scale, std::abs(oracle.mean(k + 1, n)));
        csv.row({double(k + 1), grid.node(k + 1), double(n), mean(k, n), oracle.mean(k + 1, n), err});
      }
  }
  ctx.report["mean"] = {{"sup_node_error", mean_err}, {"sup_exact", mean_scale}};

  // Variational second moment: cell pair (k, l) against the oracle at (t_{k+1}, t_{l+1}).
  double max_err = 0.0;
  double diag_err = 0.0;
  double scale = 0.0;
  double diag_scale = 0.0;
  {
    CsvWriter csv(ctx.file("moment_comparison.csv"), {"k", "t", "n", "l", "s", "m", "variational", "oracle", "abs_error"});
    for (int n = 0; n < N; ++n)
      for (int k = 0; k < K; ++k)
        for (int m = 0; m < N; ++m)
          for (int l = 0; l < K; ++l) {
            const double a = second.solution.at(k, n, l, m);
            const double b = ref_at(k + 1, n, l + 1, m);
            const double err = std::abs(a - b);
            max_err = std::max(max_err, err);
            scale = std::max(scale, std::abs(b));
            if (k == l) {
              diag_err = std::max(diag_err, err);
              diag_scale = std::max(diag_scale, std::abs(b));
            }
            csv.row({double(k + 1), grid.node(k + 1), double(n), double(l + 1), grid.node(l + 1), double(m), a, b, err});
          }
  }
  const double rel = scale > 0.0 ? max_err / scale : max_err;
  const double diag_rel = diag_scale > 0.0 ? diag_err / diag_scale : diag_err;
  ctx.report["variational_vs_oracle"] = {{"max_rel_error", rel}, {"diagonal_max_rel_error", diag_rel}};
  {
    const bool ok = rel <= v.max_rel_error;
    add_check(ctx, "variational second moment vs oracle, max relative error", rel, "<=", v.max_rel_error, ok);
    pass = pass && ok;
  }

  // Covariance solve against subtraction of the mean outer product.
  SpaceTimeMoment outer = mean_outer(mean);
  const double identity_gap = (cov.solution.data() - (second.solution.data() - outer.data())).cwiseAbs().maxCoeff();
  {
    const bool ok = identity_gap <= v.identity_tol;
    add_check(ctx, "covariance solve vs second moment minus mean outer product", identity_gap, "<=", v.identity_tol, ok);
    pass = pass && ok;
  }

  // Monte Carlo: node values against the oracle, or cell averages against the variational covariance.
  const MomentEstimate est = run_mc(ctx);
  write_estimate(ctx, est);
  const bool nodes = ctx.config.mc.observation == "nodes";
  long within = 0;
  long total = 0;
  double max_z = 0.0;
  {
    CsvWriter csv(ctx.file("mc_comparison.csv"), {"k", "n", "l", "m", "mc", "mc_se", "reference", "z"});
    for (int k = 0; k < est.points; ++k)
      for (int n = 0; n < N; ++n)
        for (int l = 0; l < est.points; ++l)
          for (int m = 0; m < N; ++m) {
            const auto i = est.index(k, n);
            const auto j = est.index(l, m);
            const double x = nodes ? est.second_moment(i, j) : est.covariance(i, j);
            const double se = nodes ? est.second_moment_se(i, j) : est.covariance_se(i, j);
            const double reference = nodes ? ref_at(k, n, l, m) : cov.solution.at(k, n, l, m);
            const double z = z_score(x, reference, se);
            max_z = std::max(max_z, std::abs(z));
            within += std::abs(z) <= v.max_z;
            ++total;
            csv.row({double(k), double(n), double(l), double(m), x, se, reference, z});
          }
  }
  const double fraction = double(within) / double(total);
  ctx.report["mc_comparison"] = {{"reference", nodes ? "oracle second moment at nodes" : "variational covariance"},
                                 {"entries", total},
                                 {"within", within},
                                 {"fraction_within", fraction},
                                 {"max_abs_z", max_z},
                                 {"max_z", v.max_z}};
  {
    const bool ok = fraction >= v.min_fraction_within;
    std::ostringstream name;
    name << "Monte Carlo entries within " << v.max_z << " SE, fraction";
    add_check(ctx, name.str(), fraction, ">=", v.min_fraction_within, ok);
    pass = pass && ok;
  }
  ctx.report["validation"] = pass ? "PASS" : "FAIL";
  ctx.log << "validate: " << (pass ? "PASS" : "FAIL") << " (max |z| = " << max_z << ", rel err = " << rel << ")\n";
  return pass ? ExitStatus::ok : ExitStatus::validation_failed;
}

ExitStatus cmd_inf_sup(Context& ctx) {
  const auto& e = ctx.experiment;
  const auto& steps = ctx.config.validate.inf_sup_steps;
  if (steps.empty()) throw ConfigError("validate.inf_sup_steps", "must not be empty");
  CsvWriter csv(ctx.file("inf_sup.csv"), {"steps", "n", "lambda", "sigma_min", "sigma_max"});
  json sweep = json::array();
  for (int K : steps) {
    if (K < 2) throw ConfigError("validate.inf_sup_steps", "every entry must be >= 2");
    const InfSupReport r = discrete_inf_sup(assemble_per_mode(e.model, TimeGrid::uniform(K, e.model.horizon())));
    for (int n = 0; n < e.model.dim(); ++n)
      csv.row({double(K), double(n), e.model.eigenvalue(n), r.per_mode_min[n], r.per_mode_max[n]});
    sweep.push_back({{"steps", K},
                     {"global_min", r.global_min},
                     {"per_mode_min", std::vector<double>(r.per_mode_min.data(), r.per_mode_min.data() + r.per_mode_min.size())}});
    ctx.log << "inf-sup K=" << K << ": global min " << r.global_min << "\n";
  }
  ctx.report["inf_sup"] = sweep;
  return ExitStatus::ok;
}

void write_report(Context& ctx) {
  std::ofstream out(ctx.out / "report.json");
  out << ctx.report.dump(2) << "\n";
}

}  // namespace

ExitStatus run(const std::string& subcommand, const std::string& config_path, const std::string& out_dir,
               const RunOptions& options, std::ostream& log) {
  const auto& names = subcommands();
  if (std::find(names.begin(), names.end(), subcommand) == names.end()) {
    log << "error: unknown subcommand '" << subcommand << "'\n";
    return ExitStatus::config_error;
  }
  std::optional<Context> ctx;
  try {
    ExperimentConfig config = load_config(config_path);
    Experiment experiment = build_experiment(config);
    fs::create_directories(out_dir);
    const int threads = options.strict_sequential ? 1 : std::max(1, options.threads);
    ctx.emplace(Context{std::move(config), std::move(experiment), fs::path(out_dir), threads, log, json::object()});
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return ExitStatus::config_error;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return ExitStatus::internal_error;
  }

  ctx->report["subcommand"] = subcommand;
  ctx->report["version"] = STM_VERSION;
  ctx->report["config_hash"] = config_hash(ctx->config);
  ctx->report["threads"] = ctx->threads;
  ctx->report["files"] = json::array();
  ctx->report["diagnostics"] = base_diagnostics(ctx->experiment);
  {
    const auto& e = ctx->experiment;
    const InfSupReport r =
        discrete_inf_sup(assemble_per_mode(e.model, TimeGrid::uniform(e.steps, e.model.horizon())));
    ctx->report["diagnostics"]["discrete_inf_sup"] = r.global_min;
  }

  ExitStatus status = ExitStatus::ok;
  const auto start = Clock::now();
  try {
    if (subcommand == "simulate") status = cmd_simulate(*ctx);
    else if (subcommand == "solve-mean") status = cmd_solve_mean(*ctx);
    else if (subcommand == "solve-moment") status = cmd_solve_moment(*ctx, false);
    else if (subcommand == "solve-covariance") status = cmd_solve_moment(*ctx, true);
    else if (subcommand == "validate") status = cmd_validate(*ctx);
    else status = cmd_inf_sup(*ctx);
  } catch (const NonConvergence& e) {
    log << "error: " << e.what() << "\n";
    write_trace(*ctx, e.trace());
    ctx->report["error"] = {{"kind", "non_convergence"}, {"message", e.what()}, {"trace", e.trace()}};
    status = ExitStatus::non_convergence;
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    ctx->report["error"] = {{"kind", "config"}, {"key", e.key()}, {"message", e.what()}};
    status = ExitStatus::config_error;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    ctx->report["error"] = {{"kind", "internal"}, {"message", e.what()}};
    status = ExitStatus::internal_error;
  }
  ctx->report["timings"]["total_s"] = seconds_since(start);
  ctx->report["exit_status"] = static_cast<int>(status);
  try {
    write_report(*ctx);
  } catch (const std::exception& e) {
    log << "error: cannot write report: " << e.what() << "\n";
    return ExitStatus::internal_error;
  }
  return status;
}

}  // namespace stm
