#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mcsmf/dynamics.hpp"
#include "mcsmf/ellipsoid.hpp"
#include "mcsmf/errors.hpp"
#include "mcsmf/remainder_bounding.hpp"
#include "mcsmf/sampling.hpp"
#include "mcsmf/smf.hpp"

namespace mcsmf {

/// Noise law of the simulation: Gaussian(mean, covariance) restricted to the
/// zero-centered ellipsoid with shape `bound`.
struct NoiseLaw {
  Matrix bound;
  Vector mean;
  Matrix covariance;
  bool enabled = true;
};

/// offset-sensor style remainder demonstration (`bound-demo`).
struct BoundDemoConfig {
  /// "range_bearing" or "linear".
  std::string map = "range_bearing";
  double a = 50.0;
  double b = 100.0;
  Vector center;
  Matrix shape;
  int boundary_samples = 50;
  int interior_samples = 10000;
};

struct ScenarioConfig {
  /// "cv_range_bearing" or "linear".
  std::string model_kind = "cv_range_bearing";
  double t = 0.2;
  Matrix f;
  Matrix h;  // linear models only
  SensorPosition sensor{};
  double sigma2 = 50.0;

  NoiseLaw process;
  NoiseLaw measurement;

  Vector truth0;
  Vector center0;
  Matrix shape0;

  int horizon = 40;
  int trials = 50;
  std::uint64_t seed = 0;
  int particles = 1000;
  std::vector<std::string> filters;

  FilterOptions filter_options{};
  std::optional<BoundDemoConfig> bound_demo;

  DynamicsModel model() const {
    if (model_kind == "linear") return make_linear_model(f, h);
    return make_linear_range_bearing_model(f, sensor);
  }
  NoiseBounds noise_bounds() const { return {process.bound, measurement.bound}; }
  Ellipsoid initial_ellipsoid() const { return Ellipsoid(center0, shape0); }
};

/// Process-noise shape of a constant-velocity target with acceleration
/// intensity sigma2 and period t (state order px, py, vx, vy).
inline Matrix cv_process_noise(double sigma2, double t) {
  Matrix q(4, 4);
  q << t * t * t / 3, 0, t * t / 2, 0,
       0, t * t * t / 3, 0, t * t / 2,
       t * t / 2, 0, t, 0,
       0, t * t / 2, 0, t;
  return sigma2 * q;
}

namespace config_detail {

using boost::property_tree::ptree;

inline Vector parse_vector(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::vector<double> values;
  std::string token;
  while (in >> token) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(token, &used));
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': '" + token + "' is not a number");
    }
  }
  if (values.empty()) throw ConfigError("key '" + key + "' is empty");
  return Eigen::Map<Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

/// Rows separated by ';', entries by whitespace.
inline Matrix parse_matrix(const std::string& text, const std::string& key) {
  std::vector<Vector> rows;
  std::stringstream in(text);
  std::string row;
  while (std::getline(in, row, ';')) {
    if (row.find_first_not_of(" \t") == std::string::npos) continue;
    rows.push_back(parse_vector(row, key));
  }
  if (rows.empty()) throw ConfigError("key '" + key + "' is empty");
  Matrix m(static_cast<Eigen::Index>(rows.size()), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.cols()) throw ConfigError("key '" + key + "': rows have different lengths");
    m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  }
  return m;
}

class Reader {
 public:
  explicit Reader(const ptree& tree) : tree_(tree) {}

  bool has(const std::string& key) const { return tree_.get_optional<std::string>(key).has_value(); }

  std::string text(const std::string& key) const {
    auto v = tree_.get_optional<std::string>(key);
    if (!v) throw ConfigError("missing required key '" + key + "'");
    return *v;
  }
  std::string text(const std::string& key, const std::string& fallback) const {
    return has(key) ? text(key) : fallback;
  }

  double number(const std::string& key) const { return parse_vector(text(key), key)(0); }
  double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

  long integer(const std::string& key, long fallback) const {
    if (!has(key)) return fallback;
    const std::string s = text(key);
    try {
      std::size_t used = 0;
      const long v = std::stol(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': '" + s + "' is not an integer");
    }
  }

  bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string s = text(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("key '" + key + "': '" + s + "' is not a boolean");
  }

  Vector vector(const std::string& key) const { return parse_vector(text(key), key); }
  Matrix matrix(const std::string& key) const { return parse_matrix(text(key), key); }

  /// Either `<prefix>` as a full matrix or `<prefix>_diag` as a diagonal.
  Matrix shape(const std::string& key) const {
    if (has(key + "_diag")) return vector(key + "_diag").asDiagonal();
    return matrix(key);
  }

 private:
  const ptree& tree_;
};

inline void require_pd(const Matrix& m, const std::string& key) {
  if (m.rows() != m.cols()) throw ConfigError("key '" + key + "' must be a square matrix");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  if (!(eig.eigenvalues().minCoeff() > 1e-12 * eig.eigenvalues().cwiseAbs().maxCoeff())) {
    throw ConfigError("key '" + key + "' must be positive definite");
  }
}

inline void require_dim(Eigen::Index got, Eigen::Index want, const std::string& key) {
  if (got != want) {
    throw ConfigError("key '" + key + "' has dimension " + std::to_string(got) + ", expected " +
                      std::to_string(want));
  }
}

inline NoiseLaw read_noise(const Reader& r, const std::string& section, const std::string& bound_key,
                           Eigen::Index dim, const std::optional<Matrix>& default_bound) {
  NoiseLaw law;
  law.enabled = r.flag(section + ".enabled", true);
  const std::string key = section + "." + bound_key;
  if (r.has(key) || r.has(key + "_diag")) {
    law.bound = r.shape(key);
  } else if (default_bound) {
    law.bound = *default_bound;
  } else {
    throw ConfigError("missing required key '" + key + "'");
  }
  require_dim(law.bound.rows(), dim, key);
  require_pd(law.bound, key);
  law.mean = r.has(section + ".mean") ? r.vector(section + ".mean") : Vector::Zero(dim);
  require_dim(law.mean.size(), dim, section + ".mean");
  const double divisor = r.number(section + ".covariance_divisor", 9.0);
  if (!(divisor > 0.0)) throw ConfigError("key '" + section + ".covariance_divisor' must be positive");
  law.covariance = r.has(section + ".covariance") ? r.matrix(section + ".covariance") : Matrix(law.bound / divisor);
  require_dim(law.covariance.rows(), dim, section + ".covariance");
  require_pd(law.covariance, section + ".covariance");
  return law;
}

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace config_detail

/// Parse a scenario from INI text. Errors name the offending key.
inline ScenarioConfig parse_scenario(const std::string& text) {
  using namespace config_detail;
  ptree tree;
  try {
    std::istringstream in(text);
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& err) {
    throw ConfigError(std::string("malformed config: ") + err.what());
  }
  const Reader r(tree);
  ScenarioConfig cfg;

  cfg.model_kind = r.text("model.kind", "cv_range_bearing");
  if (cfg.model_kind != "cv_range_bearing" && cfg.model_kind != "linear") {
    throw ConfigError("key 'model.kind': unknown model '" + cfg.model_kind +
                      "' (expected cv_range_bearing or linear)");
  }
  cfg.t = r.number("model.T", 0.2);
  if (!(cfg.t > 0.0)) throw ConfigError("key 'model.T' must be positive");
  cfg.f = r.has("model.F") ? r.matrix("model.F") : cv_transition(cfg.t);
  if (cfg.f.rows() != cfg.f.cols()) throw ConfigError("key 'model.F' must be square");
  const Eigen::Index n = cfg.f.rows();
  Eigen::Index n1 = 2;
  if (cfg.model_kind == "linear") {
    cfg.h = r.matrix("model.H");
    require_dim(cfg.h.cols(), n, "model.H");
    n1 = cfg.h.rows();
  } else if (n < 2) {
    throw ConfigError("key 'model.F': range-bearing models need at least two state coordinates");
  }
  cfg.sensor = {r.number("model.sensor_a", 0.0), r.number("model.sensor_b", 0.0)};

  cfg.sigma2 = r.number("process_noise.sigma2", 50.0);
  std::optional<Matrix> cv_q;
  if (n == 4) cv_q = cv_process_noise(cfg.sigma2, cfg.t);
  cfg.process = read_noise(r, "process_noise", "Q", n, cv_q);
  cfg.measurement = read_noise(r, "measurement_noise", "R", n1, std::nullopt);

  cfg.truth0 = r.vector("initial.truth");
  require_dim(cfg.truth0.size(), n, "initial.truth");
  cfg.center0 = r.vector("initial.center");
  require_dim(cfg.center0.size(), n, "initial.center");
  cfg.shape0 = r.shape("initial.shape");
  require_dim(cfg.shape0.rows(), n, "initial.shape");
  require_pd(cfg.shape0, "initial.shape");

  cfg.horizon = static_cast<int>(r.integer("run.horizon", 40));
  if (cfg.horizon < 1) throw ConfigError("key 'run.horizon' must be at least 1");
  cfg.trials = static_cast<int>(r.integer("run.trials", 50));
  if (cfg.trials < 1) throw ConfigError("key 'run.trials' must be at least 1");
  cfg.seed = static_cast<std::uint64_t>(r.integer("run.seed", 0));
  cfg.particles = static_cast<int>(r.integer("run.particles", 1000));
  if (cfg.particles < 1) throw ConfigError("key 'run.particles' must be at least 1");
  cfg.filters = split_list(r.text("run.filters", "mcsmf"));

  FilterOptions& fo = cfg.filter_options;
  fo.boundary_plan.count = static_cast<int>(r.integer("run.boundary_samples", 50));
  fo.boundary_plan.deterministic = r.flag("run.deterministic_boundary", true);
  fo.boundary_plan.seed = cfg.seed;
  fo.ball_plan.count = static_cast<int>(r.integer("run.ball_samples", 200));
  fo.ball_plan.seed = cfg.seed + 1;
  fo.boundary_plan.inflation = fo.ball_plan.inflation = r.number("run.inflation", 1.0);
  if (fo.boundary_plan.inflation < 1.0) throw ConfigError("key 'run.inflation' must be >= 1");
  if (fo.boundary_plan.count < 3) throw ConfigError("key 'run.boundary_samples' must be at least 3");
  if (fo.ball_plan.count < n + 1) throw ConfigError("key 'run.ball_samples' must exceed the state dimension");
  fo.force_ball = r.flag("run.force_ball", false);
  fo.solver.feasibility_tolerance = r.number("solver.feasibility_tolerance", 1e-7);
  fo.solver.gap_tolerance = r.number("solver.gap_tolerance", 1e-9);
  fo.solver.max_iterations = static_cast<int>(r.integer("solver.max_iterations", 100));
  fo.solver.verbosity = static_cast<int>(r.integer("solver.verbosity", 0));
  if (!(fo.solver.feasibility_tolerance > 0.0)) throw ConfigError("key 'solver.feasibility_tolerance' must be positive");
  if (!(fo.solver.gap_tolerance > 0.0)) throw ConfigError("key 'solver.gap_tolerance' must be positive");
  if (fo.solver.max_iterations < 1) throw ConfigError("key 'solver.max_iterations' must be at least 1");

  if (tree.get_child_optional("bound_demo")) {
    BoundDemoConfig bd;
    bd.map = r.text("bound_demo.map", "range_bearing");
    if (bd.map != "range_bearing" && bd.map != "linear") {
      throw ConfigError("key 'bound_demo.map': unknown map '" + bd.map + "' (expected range_bearing or linear)");
    }
    bd.a = r.number("bound_demo.a", 50.0);
    bd.b = r.number("bound_demo.b", 100.0);
    bd.center = r.vector("bound_demo.center");
    require_dim(bd.center.size(), 2, "bound_demo.center");
    bd.shape = r.shape("bound_demo.shape");
    require_dim(bd.shape.rows(), 2, "bound_demo.shape");
    require_pd(bd.shape, "bound_demo.shape");
    bd.boundary_samples = static_cast<int>(r.integer("bound_demo.boundary_samples", 50));
    bd.interior_samples = static_cast<int>(r.integer("bound_demo.interior_samples", 10000));
    if (bd.boundary_samples < 3) throw ConfigError("key 'bound_demo.boundary_samples' must be at least 3");
    if (bd.interior_samples < 1) throw ConfigError("key 'bound_demo.interior_samples' must be at least 1");
    cfg.bound_demo = bd;
  }
  return cfg;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

inline ScenarioConfig load_scenario(const std::filesystem::path& path) { return parse_scenario(read_text_file(path)); }

/// Ground truth and measurements of one trial. Index k runs 0..horizon.
struct TrialRecord {
  int trial = 0;
  std::vector<Vector> truth;
  std::vector<Vector> measurements;
  std::vector<Vector> process_noise;
  std::vector<Vector> measurement_noise;
};

/// x_{k+1} = f(x_k) + w_k and y_k = h(x_k) + v_k with bounded noise drawn by
/// rejection; trial t uses its own stream derived from the master seed.
inline TrialRecord simulate_trial(const ScenarioConfig& cfg, int trial) {
  const DynamicsModel model = cfg.model();
  Rng rng = make_rng(cfg.seed, {static_cast<std::uint64_t>(trial), 0});
  BoundedSampler sampler;
  const Ellipsoid wb(Vector::Zero(model.n), cfg.process.bound);
  const Ellipsoid vb(Vector::Zero(model.n1), cfg.measurement.bound);
  const Matrix wl = cfg.process.covariance.llt().matrixL();
  const Matrix vl = cfg.measurement.covariance.llt().matrixL();

  auto draw = [&](const NoiseLaw& law, const Ellipsoid& bound, const Matrix& lower) -> Vector {
    if (!law.enabled) return Vector::Zero(bound.dim());
    Vector v = sampler.truncated_gaussian(law.mean, lower, bound, rng);
    if (!contains(bound, v, 0.0)) throw Error("simulated noise left its bound");
    return v;
  };

  TrialRecord rec;
  rec.trial = trial;
  Vector x = cfg.truth0;
  for (int k = 0; k <= cfg.horizon; ++k) {
    const Vector v = draw(cfg.measurement, vb, vl);
    rec.truth.push_back(x);
    rec.measurement_noise.push_back(v);
    rec.measurements.push_back(model.h(x) + v);
    if (k == cfg.horizon) break;
    const Vector w = draw(cfg.process, wb, wl);
    rec.process_noise.push_back(w);
    x = model.f(x) + w;
  }
  return rec;
}

/// error(k) = (1/m) sum_i |x_k^i - xhat_k^i|, componentwise.
inline std::vector<Vector> error_curves(const std::vector<std::vector<Vector>>& truths,
                                        const std::vector<std::vector<Vector>>& estimates) {
  if (truths.empty() || truths.size() != estimates.size()) {
    throw DimensionMismatch("error curves need matching, non-empty truth and estimate sets");
  }
  const std::size_t steps = truths.front().size();
  std::vector<Vector> out(steps, Vector::Zero(truths.front().front().size()));
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (truths[i].size() != steps || estimates[i].size() != steps) {
      throw DimensionMismatch("every trial must cover the same horizon");
    }
    for (std::size_t k = 0; k < steps; ++k) out[k] += (truths[i][k] - estimates[i][k]).cwiseAbs();
  }
  for (auto& e : out) e /= static_cast<double>(truths.size());
  return out;
}

}  // namespace mcsmf
