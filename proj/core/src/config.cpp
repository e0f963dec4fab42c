#include "stm/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stm/error.hpp"

namespace stm {

using nlohmann::json;

namespace {

const json& require(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw ConfigError(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(path.empty() ? key : path + "." + key, "missing required key");
  return *it;
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

template <typename T>
T as(const json& value, const std::string& path) {
  try {
    return value.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(path, std::string("wrong type: ") + e.what());
  }
}

template <typename T>
T get_or(const json& obj, const std::string& key, const std::string& path, T fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  return as<T>(*it, join(path, key));
}

std::vector<double> flatten_matrix(const json& value, const std::string& path, int& rows, int& cols) {
  if (!value.is_array()) throw ConfigError(path, "expected a 2-d array");
  rows = static_cast<int>(value.size());
  cols = -1;
  std::vector<double> out;
  for (std::size_t i = 0; i < value.size(); ++i) {
    const auto row = as<std::vector<double>>(value[i], path + "[" + std::to_string(i) + "]");
    if (cols >= 0 && static_cast<int>(row.size()) != cols) throw ConfigError(path, "ragged 2-d array");
    cols = static_cast<int>(row.size());
    out.insert(out.end(), row.begin(), row.end());
  }
  if (cols < 0) cols = 0;
  return out;
}

std::vector<double> flatten_cube(const json& value, const std::string& path, int& d0, int& d1, int& d2) {
  if (!value.is_array()) throw ConfigError(path, "expected a 3-d array");
  d0 = static_cast<int>(value.size());
  d1 = -1;
  d2 = -1;
  std::vector<double> out;
  for (std::size_t i = 0; i < value.size(); ++i) {
    int r = 0;
    int c = 0;
    auto slab = flatten_matrix(value[i], path + "[" + std::to_string(i) + "]", r, c);
    if ((d1 >= 0 && r != d1) || (d2 >= 0 && c != d2)) throw ConfigError(path, "ragged 3-d array");
    d1 = r;
    d2 = c;
    out.insert(out.end(), slab.begin(), slab.end());
  }
  return out;
}

json matrix_json(const std::vector<double>& flat, int rows, int cols) {
  json out = json::array();
  for (int i = 0; i < rows; ++i) {
    out.push_back(std::vector<double>(flat.begin() + i * cols, flat.begin() + (i + 1) * cols));
  }
  return out;
}

OperatorSpec parse_operator(const json& obj, const std::string& path, bool is_g1, int& d0, int& d1, int& d2) {
  OperatorSpec spec;
  d0 = d1 = d2 = -1;
  if (!obj.is_object()) throw ConfigError(path, "expected an object");
  if (obj.contains("dense")) {
    spec.preset = "dense";
    if (is_g1) {
      spec.dense = flatten_cube(obj["dense"], join(path, "dense"), d0, d1, d2);
    } else {
      spec.dense = flatten_matrix(obj["dense"], join(path, "dense"), d0, d1);
    }
    return spec;
  }
  spec.preset = as<std::string>(require(obj, "preset", path), join(path, "preset"));
  spec.value = get_or<double>(obj, "value", path, 0.0);
  spec.seed = get_or<std::uint64_t>(obj, "seed", path, 0);
  spec.target_norm = get_or<double>(obj, "target_norm", path, 0.0);
  spec.scale = get_or<double>(obj, "scale", path, 1.0);
  const bool known = spec.preset == "zero" || spec.preset == "scalar" || spec.preset == "random" ||
                     (is_g1 ? spec.preset == "diagonal" : spec.preset == "identity");
  if (!known) throw ConfigError(join(path, "preset"), "unknown preset '" + spec.preset + "'");
  return spec;
}

json operator_json(const OperatorSpec& spec, bool is_g1, int n, int m) {
  json out;
  if (spec.preset == "dense") {
    if (is_g1) {
      json cube = json::array();
      for (int i = 0; i < n; ++i) {
        std::vector<double> slab(spec.dense.begin() + static_cast<std::ptrdiff_t>(i) * n * m,
                                 spec.dense.begin() + static_cast<std::ptrdiff_t>(i + 1) * n * m);
        cube.push_back(matrix_json(slab, n, m));
      }
      out["dense"] = cube;
    } else {
      out["dense"] = matrix_json(spec.dense, n, m);
    }
    return out;
  }
  out["preset"] = spec.preset;
  out["value"] = spec.value;
  out["seed"] = spec.seed;
  out["target_norm"] = spec.target_norm;
  out["scale"] = spec.scale;
  return out;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("malformed JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("<root>", "expected a JSON object");
  ExperimentConfig c;

  {
    const auto& s = require(root, "model", "");
    c.model.horizon = get_or<double>(s, "horizon", "model", 1.0);
    const auto& ev = require(s, "eigenvalues", "model");
    if (ev.is_array()) {
      c.model.generator = "explicit";
      c.model.eigenvalues = as<std::vector<double>>(ev, "model.eigenvalues");
      c.model.dimension = get_or<int>(s, "dimension", "model", static_cast<int>(c.model.eigenvalues.size()));
    } else {
      c.model.generator = as<std::string>(require(ev, "generator", "model.eigenvalues"),
                                          "model.eigenvalues.generator");
      if (c.model.generator != "dirichlet_laplacian") {
        throw ConfigError("model.eigenvalues.generator", "unknown generator '" + c.model.generator + "'");
      }
      c.model.length = as<double>(require(ev, "length", "model.eigenvalues"), "model.eigenvalues.length");
      c.model.dimension = as<int>(require(s, "dimension", "model"), "model.dimension");
    }
  }
  if (root.contains("time")) c.time.steps = get_or<int>(root["time"], "steps", "time", c.time.steps);
  {
    const auto& s = require(root, "noise", "");
    c.noise.q_eigenvalues = as<std::vector<double>>(require(s, "q_eigenvalues", "noise"), "noise.q_eigenvalues");
    c.noise.wiener_fraction = get_or<double>(s, "wiener_fraction", "noise", 1.0);
    c.noise.jump_rate = get_or<double>(s, "jump_rate", "noise", 0.0);
  }
  {
    const auto& s = require(root, "g", "");
    int a = 0, b = 0, d = 0;
    c.g.g1 = parse_operator(require(s, "g1", "g"), "g.g1", true, a, b, d);
    const int n = c.model.dimension;
    const int m = static_cast<int>(c.noise.q_eigenvalues.size());
    if (c.g.g1.preset == "dense" && (a != n || b != n || d != m)) {
      throw ConfigError("g.g1.dense", "shape " + std::to_string(a) + "x" + std::to_string(b) + "x" +
                                          std::to_string(d) + " conflicts with model.dimension=" +
                                          std::to_string(n) + " and len(noise.q_eigenvalues)=" +
                                          std::to_string(m));
    }
    c.g.g2 = parse_operator(require(s, "g2", "g"), "g.g2", false, a, b, d);
    if (c.g.g2.preset == "dense" && (a != n || b != m)) {
      throw ConfigError("g.g2.dense", "shape " + std::to_string(a) + "x" + std::to_string(b) +
                                          " conflicts with model.dimension=" + std::to_string(n) +
                                          " and len(noise.q_eigenvalues)=" + std::to_string(m));
    }
  }
  {
    const auto& s = require(root, "initial", "");
    const bool det = s.contains("deterministic");
    const bool sm = s.contains("second_moment");
    const bool cov = s.contains("covariance");
    if (det + sm + cov != 1) {
      throw ConfigError("initial", "exactly one of deterministic / second_moment / covariance is required");
    }
    if (det) {
      c.initial.kind = "deterministic";
      c.initial.mean = as<std::vector<double>>(s["deterministic"], "initial.deterministic");
    } else {
      c.initial.kind = sm ? "second_moment" : "covariance";
      c.initial.mean = as<std::vector<double>>(require(s, "mean", "initial"), "initial.mean");
      int r = 0, q = 0;
      c.initial.matrix = flatten_matrix(s[c.initial.kind], "initial." + c.initial.kind, r, q);
      const int n = static_cast<int>(c.initial.mean.size());
      if (r != n || q != n) {
        throw ConfigError("initial." + c.initial.kind,
                          "must be " + std::to_string(n) + "x" + std::to_string(n) + " to match initial.mean");
      }
    }
  }
  if (root.contains("mc")) {
    const auto& s = root["mc"];
    c.mc.paths = get_or<int>(s, "paths", "mc", c.mc.paths);
    if (s.contains("seed")) c.mc.seed = as<std::uint64_t>(s["seed"], "mc.seed");
    c.mc.substeps = get_or<int>(s, "substeps", "mc", c.mc.substeps);
    c.mc.observation = get_or<std::string>(s, "observation", "mc", c.mc.observation);
    if (c.mc.observation != "nodes" && c.mc.observation != "cell_averages") {
      throw ConfigError("mc.observation", "must be 'nodes' or 'cell_averages'");
    }
  }
  if (root.contains("solver")) {
    const auto& s = root["solver"];
    c.solver.picard_tol = get_or<double>(s, "picard_tol", "solver", c.solver.picard_tol);
    c.solver.picard_max_iter = get_or<int>(s, "picard_max_iter", "solver", c.solver.picard_max_iter);
  }
  if (root.contains("validate")) {
    const auto& s = root["validate"];
    auto& v = c.validate;
    v.max_z = get_or<double>(s, "max_z", "validate", v.max_z);
    v.min_fraction_within = get_or<double>(s, "min_fraction_within", "validate", v.min_fraction_within);
    v.max_rel_error = get_or<double>(s, "max_rel_error", "validate", v.max_rel_error);
    v.identity_tol = get_or<double>(s, "identity_tol", "validate", v.identity_tol);
    v.oracle_substeps = get_or<int>(s, "oracle_substeps", "validate", v.oracle_substeps);
    v.inf_sup_steps = get_or<std::vector<int>>(s, "inf_sup_steps", "validate", v.inf_sup_steps);
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string dump_config(const ExperimentConfig& c) {
  json root;
  json model;
  model["dimension"] = c.model.dimension;
  model["horizon"] = c.model.horizon;
  if (c.model.generator == "explicit") {
    model["eigenvalues"] = c.model.eigenvalues;
  } else {
    model["eigenvalues"] = {{"generator", c.model.generator}, {"length", c.model.length}};
  }
  root["model"] = model;
  root["time"] = {{"steps", c.time.steps}};
  root["noise"] = {{"q_eigenvalues", c.noise.q_eigenvalues},
                   {"wiener_fraction", c.noise.wiener_fraction},
                   {"jump_rate", c.noise.jump_rate}};
  const int n = c.model.dimension;
  const int m = static_cast<int>(c.noise.q_eigenvalues.size());
  root["g"] = {{"g1", operator_json(c.g.g1, true, n, m)}, {"g2", operator_json(c.g.g2, false, n, m)}};
  json initial;
  if (c.initial.kind == "deterministic") {
    initial["deterministic"] = c.initial.mean;
  } else {
    const int d = static_cast<int>(c.initial.mean.size());
    initial["mean"] = c.initial.mean;
    initial[c.initial.kind] = matrix_json(c.initial.matrix, d, d);
  }
  root["initial"] = initial;
  json mc = {{"paths", c.mc.paths}, {"substeps", c.mc.substeps}, {"observation", c.mc.observation}};
  if (c.mc.seed) mc["seed"] = *c.mc.seed;
  root["mc"] = mc;
  root["solver"] = {{"picard_tol", c.solver.picard_tol}, {"picard_max_iter", c.solver.picard_max_iter}};
  root["validate"] = {{"max_z", c.validate.max_z},
                      {"min_fraction_within", c.validate.min_fraction_within},
                      {"max_rel_error", c.validate.max_rel_error},
                      {"identity_tol", c.validate.identity_tol},
                      {"oracle_substeps", c.validate.oracle_substeps},
                      {"inf_sup_steps", c.validate.inf_sup_steps}};
  return root.dump(2);
}

std::string config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : dump_config(config)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

AffineNoiseMap build_gmap(const ExperimentConfig& c, const SpectralModel& model, const NoiseModel& noise) {
  const int n = model.dim();
  const int m = noise.dim();
  std::vector<Eigen::MatrixXd> g1(static_cast<std::size_t>(m), Eigen::MatrixXd::Zero(n, n));
  Eigen::MatrixXd g2 = Eigen::MatrixXd::Zero(n, m);

  const auto& s1 = c.g.g1;
  if (s1.preset == "dense") {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int q = 0; q < m; ++q) g1[static_cast<std::size_t>(q)](i, j) = s1.dense[static_cast<std::size_t>((i * n + j) * m + q)];
  } else if (s1.preset == "scalar") {
    if (n != 1 || m != 1) throw ConfigError("g.g1.preset", "'scalar' requires model.dimension = 1 and one noise mode");
    g1[0](0, 0) = s1.value;
  } else if (s1.preset == "diagonal") {
    if (n != m) throw ConfigError("g.g1.preset", "'diagonal' requires model.dimension = len(noise.q_eigenvalues)");
    for (int i = 0; i < n; ++i) g1[static_cast<std::size_t>(i)](i, i) = s1.value;
  } else if (s1.preset == "random") {
    Rng rng = make_stream(s1.seed, 0);
    std::normal_distribution<double> normal;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int q = 0; q < m; ++q) g1[static_cast<std::size_t>(q)](i, j) = normal(rng);
  }

  const auto& s2 = c.g.g2;
  if (s2.preset == "dense") {
    for (int i = 0; i < n; ++i)
      for (int q = 0; q < m; ++q) g2(i, q) = s2.dense[static_cast<std::size_t>(i * m + q)];
  } else if (s2.preset == "scalar") {
    if (n != 1 || m != 1) throw ConfigError("g.g2.preset", "'scalar' requires model.dimension = 1 and one noise mode");
    g2(0, 0) = s2.value;
  } else if (s2.preset == "identity") {
    if (n != m) throw ConfigError("g.g2.preset", "'identity' requires model.dimension = len(noise.q_eigenvalues)");
    g2 = (s2.value == 0.0 ? 1.0 : s2.value) * Eigen::MatrixXd::Identity(n, m);
  } else if (s2.preset == "random") {
    Rng rng = make_stream(s2.seed, 1);
    std::normal_distribution<double> normal;
    for (int i = 0; i < n; ++i)
      for (int q = 0; q < m; ++q) g2(i, q) = s2.scale * normal(rng);
  }

  AffineNoiseMap gmap(std::move(g1), std::move(g2));
  if (s1.preset == "random") {
    const double norm = g1_v_to_hs_norm(gmap, model, noise);
    if (norm == 0.0) throw ConfigError("g.g1", "random G1 has zero norm (all noise modes inactive?)");
    gmap = gmap.with_g1_scaled(s1.target_norm / norm);
  }
  return gmap;
}

}  // namespace

Experiment build_experiment(const ExperimentConfig& c) {
  if (c.model.dimension < 1) throw ConfigError("model.dimension", "must be >= 1");
  if (c.model.generator == "explicit" &&
      static_cast<int>(c.model.eigenvalues.size()) != c.model.dimension) {
    throw ConfigError("model.eigenvalues", "has " + std::to_string(c.model.eigenvalues.size()) +
                                               " entries but model.dimension = " +
                                               std::to_string(c.model.dimension));
  }
  if (c.time.steps < 2) throw ConfigError("time.steps", "must be >= 2");
  if (static_cast<int>(c.initial.mean.size()) != c.model.dimension) {
    throw ConfigError(c.initial.kind == "deterministic" ? "initial.deterministic" : "initial.mean",
                      "has " + std::to_string(c.initial.mean.size()) + " entries but model.dimension = " +
                          std::to_string(c.model.dimension));
  }
  if (c.mc.paths < 2) throw ConfigError("mc.paths", "must be >= 2");
  if (c.mc.substeps < 1) throw ConfigError("mc.substeps", "must be >= 1");
  if (!(c.solver.picard_tol > 0.0)) throw ConfigError("solver.picard_tol", "must be positive");
  if (c.solver.picard_max_iter < 1) throw ConfigError("solver.picard_max_iter", "must be >= 1");

  auto wrap = [](const char* key, auto&& make) {
    try {
      return make();
    } catch (const InvalidArgument& e) {
      throw ConfigError(key, e.what());
    }
  };
  SpectralModel model = wrap("model", [&] {
    if (c.model.generator == "dirichlet_laplacian") {
      return SpectralModel::dirichlet_laplacian(c.model.dimension, c.model.length, c.model.horizon);
    }
    return SpectralModel(Eigen::Map<const Eigen::VectorXd>(c.model.eigenvalues.data(),
                                                           static_cast<Eigen::Index>(c.model.eigenvalues.size())),
                         c.model.horizon);
  });
  NoiseModel noise = wrap("noise", [&] {
    return NoiseModel(Eigen::Map<const Eigen::VectorXd>(c.noise.q_eigenvalues.data(),
                                                        static_cast<Eigen::Index>(c.noise.q_eigenvalues.size())),
                      c.noise.wiener_fraction, c.noise.jump_rate);
  });
  AffineNoiseMap gmap = wrap("g", [&] { return build_gmap(c, model, noise); });
  const int n = model.dim();
  const Eigen::VectorXd mean = Eigen::Map<const Eigen::VectorXd>(c.initial.mean.data(), n);
  InitialLaw initial = wrap("initial", [&] {
    if (c.initial.kind == "deterministic") return InitialLaw::deterministic(mean);
    const Eigen::MatrixXd mat = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        c.initial.matrix.data(), n, n);
    const Eigen::MatrixXd cov = c.initial.kind == "covariance" ? mat : Eigen::MatrixXd(mat - mean * mean.transpose());
    return InitialLaw::gaussian(mean, cov);
  });
  return Experiment{std::move(model), std::move(noise), std::move(gmap), std::move(initial), c.time.steps};
}

}  // namespace stm
