#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stm/levy_driver.hpp"
#include "stm/monte_carlo.hpp"
#include "stm/spectral_model.hpp"

namespace stm {

// Experiment configuration. The on-disk format is JSON with one object per
// section; see docs/config.md for the key reference.

struct ModelSection {
  int dimension = 1;
  std::string generator = "explicit";  ///< "explicit" or "dirichlet_laplacian"
  std::vector<double> eigenvalues;      ///< used by "explicit"
  double length = 0.0;                  ///< used by "dirichlet_laplacian"
  double horizon = 1.0;

  bool operator==(const ModelSection&) const = default;
};

struct TimeSection {
  int steps = 64;

  bool operator==(const TimeSection&) const = default;
};

struct NoiseSection {
  std::vector<double> q_eigenvalues;
  double wiener_fraction = 1.0;
  double jump_rate = 0.0;

  bool operator==(const NoiseSection&) const = default;
};

/// g1 or g2 given as a preset or as dense entries.
///   g1 presets: zero, scalar (N = M = 1), diagonal (N = M, g[i][i][i] = value),
///               random (seeded Gaussian, rescaled so ||G1||_{L(V;L2(H;H))} = target_norm)
///   g2 presets: zero, scalar (N = M = 1), identity (N = M, times value), random (seeded, times scale)
struct OperatorSpec {
  std::string preset = "zero";  ///< one of the presets above, or "dense"
  double value = 0.0;
  std::uint64_t seed = 0;
  double target_norm = 0.0;
  double scale = 1.0;
  std::vector<double> dense;  ///< row-major g1[i][j][m] or g2[i][m]

  bool operator==(const OperatorSpec&) const = default;
};

struct GSection {
  OperatorSpec g1;
  OperatorSpec g2;

  bool operator==(const GSection&) const = default;
};

struct InitialSection {
  std::string kind = "deterministic";  ///< "deterministic", "second_moment" or "covariance"
  std::vector<double> mean;
  std::vector<double> matrix;  ///< row-major N x N; empty for "deterministic"

  bool operator==(const InitialSection&) const = default;
};

struct McSection {
  int paths = 1000;
  std::optional<std::uint64_t> seed;
  int substeps = 1;
  std::string observation = "nodes";  ///< "nodes" or "cell_averages"

  bool operator==(const McSection&) const = default;
};

struct SolverSection {
  double picard_tol = 1e-10;
  int picard_max_iter = 200;

  bool operator==(const SolverSection&) const = default;
};

struct ValidateSection {
  double max_z = 3.0;
  double min_fraction_within = 0.99;
  double max_rel_error = 0.02;
  double identity_tol = 1e-8;
  int oracle_substeps = 8;
  std::vector<int> inf_sup_steps{16, 32, 64};

  bool operator==(const ValidateSection&) const = default;
};

struct ExperimentConfig {
  ModelSection model;
  TimeSection time;
  NoiseSection noise;
  GSection g;
  InitialSection initial;
  McSection mc;
  SolverSection solver;
  ValidateSection validate;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Parses JSON text. Throws ConfigError naming the offending key path.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// Canonical JSON text; parse_config(dump_config(c)) == c.
std::string dump_config(const ExperimentConfig& config);

/// FNV-1a hash of the canonical dump, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

/// Runtime objects built from a configuration.
struct Experiment {
  SpectralModel model;
  NoiseModel noise;
  AffineNoiseMap gmap;
  InitialLaw initial;
  int steps;
};

/// Validates cross-section consistency (throws ConfigError) and builds the objects.
Experiment build_experiment(const ExperimentConfig& config);

}  // namespace stm
