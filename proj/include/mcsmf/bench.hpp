#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "mcsmf/conic_program.hpp"
#include "mcsmf/interior_point.hpp"
#include "mcsmf/particle_filter.hpp"
#include "mcsmf/remainder_bounding.hpp"
#include "mcsmf/scenario.hpp"
#include "mcsmf/smf.hpp"

#ifndef MCSMF_VERSION
#define MCSMF_VERSION "0.0.0"
#endif

namespace mcsmf {

inline const std::vector<std::string>& filter_tags() {
  static const std::vector<std::string> tags{"mcsmf", "mcsmf-interval", "pf-t", "pf-g", "pf-u"};
  return tags;
}

inline void validate_filters(const std::vector<std::string>& filters) {
  std::string valid;
  for (const auto& t : filter_tags()) valid += (valid.empty() ? "" : ", ") + t;
  if (filters.empty()) throw ConfigError("key 'run.filters' is empty (valid filters: " + valid + ")");
  for (const auto& f : filters) {
    if (std::find(filter_tags().begin(), filter_tags().end(), f) == filter_tags().end()) {
      throw ConfigError("key 'run.filters': unknown filter '" + f + "' (valid filters: " + valid + ")");
    }
  }
}

inline bool is_particle_filter(const std::string& tag) { return tag.rfind("pf-", 0) == 0; }

/// One filter on one trial. Sequences are indexed by k = 0..K and stop early
/// when the filter aborts.
struct FilterTrial {
  std::vector<Vector> estimates;
  std::vector<double> traces;
  std::vector<bool> contained;
  /// 3-sigma bands; particle filters only.
  std::vector<Vector> band_lower;
  std::vector<Vector> band_upper;
  std::vector<double> wall_times;
  std::optional<std::string> failure;
  std::optional<int> failed_step;

  bool complete(int horizon) const {
    return !failure && static_cast<int>(estimates.size()) == horizon + 1;
  }
};

struct FilterResult {
  std::string tag;
  std::vector<FilterTrial> trials;
};

struct ExperimentResult {
  std::vector<TrialRecord> records;
  std::vector<FilterResult> filters;

  const FilterResult& filter(const std::string& tag) const {
    for (const auto& f : filters) {
      if (f.tag == tag) return f;
    }
    throw Error("no results for filter '" + tag + "'");
  }
};

/// Per-step aggregates over all trials of one filter.
struct FilterCurves {
  std::vector<Vector> error;          // over trials that ran to the horizon
  std::vector<double> containment;    // over all trials; aborted steps count as misses
  std::vector<double> mean_trace;
  std::vector<double> mean_wall_time;
  int completed_trials = 0;
};

namespace bench_detail {

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

inline std::uint64_t filter_stream(const std::string& tag) {
  const auto& tags = filter_tags();
  return static_cast<std::uint64_t>(std::find(tags.begin(), tags.end(), tag) - tags.begin()) + 1;
}

inline void record_failure(FilterTrial& out, const std::exception& err, int fallback_step) {
  out.failure = err.what();
  out.failed_step = fallback_step;
  if (const auto* se = dynamic_cast<const StepError*>(&err); se && se->step()) out.failed_step = *se->step();
}

inline FilterTrial run_smf_trial(const ScenarioConfig& cfg, const TrialRecord& rec, bool interval,
                                 const ConicBackend& backend) {
  const DynamicsModel model = cfg.model();
  FilterOptions opts = cfg.filter_options;
  opts.interval_remainders = interval;
  FilterTrial out;
  FilterState state{cfg.initial_ellipsoid(), 0, {}};
  auto push = [&](const FilterState& s, double wall) {
    const int k = s.step;
    out.estimates.push_back(s.estimate.center());
    out.traces.push_back(s.estimate.trace());
    out.contained.push_back(contains(s.estimate, rec.truth[static_cast<std::size_t>(k)], 1e-6));
    out.wall_times.push_back(wall);
  };
  push(state, 0.0);
  for (int k = 0; k < cfg.horizon; ++k) {
    try {
      state = filter_cycle(state, rec.measurements[static_cast<std::size_t>(k)],
                           rec.measurements[static_cast<std::size_t>(k) + 1], model, cfg.noise_bounds(), backend, opts);
    } catch (const std::exception& err) {
      record_failure(out, err, k + 1);
      break;
    }
    push(state, state.diagnostics.wall_time);
  }
  return out;
}

inline std::pair<NoiseHypothesis, NoiseHypothesis> hypotheses(const ScenarioConfig& cfg, const std::string& tag) {
  const Ellipsoid wb(Vector::Zero(cfg.process.bound.rows()), cfg.process.bound);
  const Ellipsoid vb(Vector::Zero(cfg.measurement.bound.rows()), cfg.measurement.bound);
  if (tag == "pf-t") {
    return {NoiseHypothesis::true_pdf(wb, cfg.process.mean, cfg.process.covariance),
            NoiseHypothesis::true_pdf(vb, cfg.measurement.mean, cfg.measurement.covariance)};
  }
  if (tag == "pf-g") {
    return {NoiseHypothesis::zero_mean_gaussian(wb, cfg.process.covariance),
            NoiseHypothesis::zero_mean_gaussian(vb, cfg.measurement.covariance)};
  }
  return {NoiseHypothesis::uniform(wb), NoiseHypothesis::uniform(vb)};
}

inline FilterTrial run_pf_trial(const ScenarioConfig& cfg, const TrialRecord& rec, const std::string& tag) {
  const DynamicsModel model = cfg.model();
  const auto [process, meas] = hypotheses(cfg, tag);
  Rng rng = make_rng(cfg.seed, {static_cast<std::uint64_t>(rec.trial), filter_stream(tag)});
  BoundedSampler sampler;
  FilterTrial out;
  auto push = [&](const ParticleCloud& cloud, int k, double wall) {
    const auto [mean, cov] = pf_estimate(cloud);
    const auto [lo, hi] = confidence_band(cloud, 3.0);
    const Vector& x = rec.truth[static_cast<std::size_t>(k)];
    out.estimates.push_back(mean);
    out.traces.push_back(cov.trace());
    out.band_lower.push_back(lo);
    out.band_upper.push_back(hi);
    out.contained.push_back((x.array() >= lo.array()).all() && (x.array() <= hi.array()).all());
    out.wall_times.push_back(wall);
  };
  ParticleCloud cloud;
  try {
    auto start = std::chrono::steady_clock::now();
    cloud = pf_initialize(cfg.initial_ellipsoid(), cfg.particles, rec.measurements.front(), model, meas, rng);
    push(cloud, 0, seconds_since(start));
    for (int k = 1; k <= cfg.horizon; ++k) {
      start = std::chrono::steady_clock::now();
      cloud = pf_step(cloud, rec.measurements[static_cast<std::size_t>(k)], model, process, meas, rng, sampler, k);
      push(cloud, k, seconds_since(start));
    }
  } catch (const std::exception& err) {
    record_failure(out, err, static_cast<int>(out.estimates.size()));
  }
  return out;
}

/// Run `task(i)` for i in [0, count) on up to `threads` workers.
inline void parallel_for(int count, int threads, const std::function<void(int)>& task) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

inline int default_threads() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

}  // namespace bench_detail

/// Run one filter on one simulated trial.
inline FilterTrial run_filter_trial(const ScenarioConfig& cfg, const TrialRecord& rec, const std::string& tag,
                                    const ConicBackend& backend) {
  validate_filters({tag});
  if (tag == "mcsmf") return bench_detail::run_smf_trial(cfg, rec, false, backend);
  if (tag == "mcsmf-interval") return bench_detail::run_smf_trial(cfg, rec, true, backend);
  return bench_detail::run_pf_trial(cfg, rec, tag);
}

/// Simulate cfg.trials trials and run every filter in cfg.filters on each.
/// Results depend only on the config, never on the thread count.
inline ExperimentResult run_experiment(const ScenarioConfig& cfg, const ConicBackend& backend, int threads = 0) {
  validate_filters(cfg.filters);
  if (threads <= 0) threads = bench_detail::default_threads();
  ExperimentResult res;
  res.records.resize(static_cast<std::size_t>(cfg.trials));
  for (const auto& tag : cfg.filters) res.filters.push_back({tag, std::vector<FilterTrial>(res.records.size())});
  bench_detail::parallel_for(cfg.trials, threads, [&](int t) {
    const auto i = static_cast<std::size_t>(t);
    res.records[i] = simulate_trial(cfg, t);
    for (auto& f : res.filters) f.trials[i] = run_filter_trial(cfg, res.records[i], f.tag, backend);
  });
  return res;
}

inline FilterCurves filter_curves(const ExperimentResult& res, const std::string& tag, int horizon) {
  const FilterResult& fr = res.filter(tag);
  const auto steps = static_cast<std::size_t>(horizon) + 1;
  FilterCurves c;
  c.containment.assign(steps, 0.0);
  c.mean_trace.assign(steps, 0.0);
  c.mean_wall_time.assign(steps, 0.0);
  std::vector<int> present(steps, 0);
  std::vector<std::vector<Vector>> truths, estimates;
  for (std::size_t t = 0; t < fr.trials.size(); ++t) {
    const FilterTrial& ft = fr.trials[t];
    for (std::size_t k = 0; k < ft.estimates.size(); ++k) {
      c.containment[k] += ft.contained[k] ? 1.0 : 0.0;
      c.mean_trace[k] += ft.traces[k];
      c.mean_wall_time[k] += ft.wall_times[k];
      ++present[k];
    }
    if (ft.complete(horizon)) {
      truths.push_back(res.records[t].truth);
      estimates.push_back(ft.estimates);
    }
  }
  for (std::size_t k = 0; k < steps; ++k) {
    c.containment[k] /= static_cast<double>(fr.trials.size());
    if (present[k] > 0) {
      c.mean_trace[k] /= present[k];
      c.mean_wall_time[k] /= present[k];
    }
  }
  c.completed_trials = static_cast<int>(truths.size());
  if (!truths.empty()) c.error = error_curves(truths, estimates);
  return c;
}

/// Mean over k = 1..K of the average absolute error of the first two state
/// coordinates (the position for the tracking scenarios).
inline double mean_position_error(const FilterCurves& c) {
  if (c.error.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double acc = 0.0;
  for (std::size_t k = 1; k < c.error.size(); ++k) acc += 0.5 * (c.error[k](0) + c.error[k](1));
  return acc / static_cast<double>(c.error.size() - 1);
}

/// Fraction of (trial, step) pairs whose estimate contains the truth; aborted
/// steps count as misses.
inline double overall_containment(const FilterResult& fr, int horizon) {
  double hit = 0.0;
  for (const auto& ft : fr.trials) {
    for (bool c : ft.contained) hit += c ? 1.0 : 0.0;
  }
  return hit / (static_cast<double>(fr.trials.size()) * (horizon + 1));
}

// ---------------------------------------------------------------------------
// Output

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Output directory: explicit flag, else MCSMF_OUT_DIR, else `fallback`.
inline std::filesystem::path resolve_out_dir(const std::optional<std::string>& flag,
                                             const std::string& fallback = "results") {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv("MCSMF_OUT_DIR"); env && *env) return env;
  return fallback;
}

struct RunManifest {
  std::string command;
  std::string config_path;
  std::string config_sha256;
  std::vector<std::string> filters;
  std::string out_dir;
  std::string version = MCSMF_VERSION;
  std::string started_at;
  std::optional<std::string> finished_at;
  std::string status = "running";
  nlohmann::json parameters = nlohmann::json::object();

  nlohmann::json to_json() const {
    nlohmann::json j{{"command", command},         {"config_path", config_path}, {"config_sha256", config_sha256},
                     {"filters", filters},         {"out_dir", out_dir},         {"version", version},
                     {"started_at", started_at},   {"status", status},           {"parameters", parameters}};
    j["finished_at"] = finished_at ? nlohmann::json(*finished_at) : nlohmann::json(nullptr);
    return j;
  }
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

inline void write_manifest(const std::filesystem::path& dir, const RunManifest& m) {
  std::filesystem::create_directories(dir);
  write_text(dir / "manifest.json", m.to_json().dump(2) + "\n");
}

/// Columns: k, error_1..error_n, containment_rate, mean_trace, mean_wall_time.
inline std::string curves_csv(const FilterCurves& c, int horizon, Eigen::Index state_dim) {
  std::string out = "k";
  for (Eigen::Index i = 0; i < state_dim; ++i) out += ",error_" + std::to_string(i + 1);
  out += ",containment_rate,mean_trace,mean_wall_time\n";
  for (int k = 0; k <= horizon; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    out += std::to_string(k);
    for (Eigen::Index i = 0; i < state_dim; ++i) {
      out += "," + (c.error.empty() ? std::string("nan") : format_double(c.error[kk](i)));
    }
    out += "," + format_double(c.containment[kk]) + "," + format_double(c.mean_trace[kk]) + "," +
           format_double(c.mean_wall_time[kk]) + "\n";
  }
  return out;
}

inline nlohmann::json experiment_summary(const ExperimentResult& res, const ScenarioConfig& cfg) {
  nlohmann::json j;
  j["trials"] = cfg.trials;
  j["horizon"] = cfg.horizon;
  j["seed"] = cfg.seed;
  for (const auto& fr : res.filters) {
    const FilterCurves c = filter_curves(res, fr.tag, cfg.horizon);
    nlohmann::json f;
    f["completed_trials"] = c.completed_trials;
    const double pos = mean_position_error(c);
    f["mean_position_error"] = std::isfinite(pos) ? nlohmann::json(pos) : nlohmann::json(nullptr);
    f["containment_rate"] = overall_containment(fr, cfg.horizon);
    double wall = 0.0;
    int steps = 0;
    nlohmann::json failures = nlohmann::json::array();
    for (std::size_t t = 0; t < fr.trials.size(); ++t) {
      const FilterTrial& ft = fr.trials[t];
      for (std::size_t k = 1; k < ft.wall_times.size(); ++k, ++steps) wall += ft.wall_times[k];
      if (ft.failure) {
        failures.push_back({{"trial", t}, {"step", ft.failed_step ? nlohmann::json(*ft.failed_step) : nlohmann::json(nullptr)},
                            {"message", *ft.failure}});
      }
    }
    f["mean_step_wall_time"] = steps > 0 ? wall / steps : 0.0;
    f["failures"] = failures;
    j["filters"][fr.tag] = f;
  }
  return j;
}

/// Write <tag>.csv per filter plus summary.json; returns the number of
/// aborted trials.
inline int write_experiment(const std::filesystem::path& dir, const ExperimentResult& res, const ScenarioConfig& cfg) {
  std::filesystem::create_directories(dir);
  const Eigen::Index n = cfg.truth0.size();
  int aborted = 0;
  for (const auto& fr : res.filters) {
    write_text(dir / (fr.tag + ".csv"), curves_csv(filter_curves(res, fr.tag, cfg.horizon), cfg.horizon, n));
    for (const auto& ft : fr.trials) aborted += ft.failure ? 1 : 0;
  }
  write_text(dir / "summary.json", experiment_summary(res, cfg).dump(2) + "\n");
  return aborted;
}

// ---------------------------------------------------------------------------
// Timing sweep

struct TimingRow {
  std::string filter;
  std::string parameter;
  int value = 0;
  int steps = 0;
  double mean_step_time = 0.0;
};

/// Mean per-step wall time of MCSMF across boundary-sample counts and of
/// PF-T across particle counts, each over `trials` trials of the horizon.
/// Either sweep may be empty, not both.
/// Trials run sequentially so the timings do not compete for cores.
inline std::vector<TimingRow> run_timing(const ScenarioConfig& cfg, const std::vector<int>& sample_counts,
                                         const std::vector<int>& particle_counts, int trials,
                                         const ConicBackend& backend) {
  if (sample_counts.empty() && particle_counts.empty()) throw ConfigError("timing sweep is empty");
  if (trials < 1) throw ConfigError("timing needs at least one trial");
  std::vector<TrialRecord> records;
  for (int t = 0; t < trials; ++t) records.push_back(simulate_trial(cfg, t));

  auto measure = [&](const ScenarioConfig& c, const std::string& tag, const std::string& parameter, int value) {
    TimingRow row{tag, parameter, value, 0, 0.0};
    double total = 0.0;
    for (const auto& rec : records) {
      const FilterTrial ft = run_filter_trial(c, rec, tag, backend);
      for (std::size_t k = 1; k < ft.wall_times.size(); ++k, ++row.steps) total += ft.wall_times[k];
    }
    row.mean_step_time = row.steps > 0 ? total / row.steps : 0.0;
    return row;
  };

  std::vector<TimingRow> rows;
  for (int n : sample_counts) {
    if (n < 3) throw ConfigError("boundary sample count must be at least 3, got " + std::to_string(n));
    ScenarioConfig c = cfg;
    c.filter_options.boundary_plan.count = n;
    rows.push_back(measure(c, "mcsmf", "boundary_samples", n));
  }
  for (int n : particle_counts) {
    if (n < 1) throw ConfigError("particle count must be positive, got " + std::to_string(n));
    ScenarioConfig c = cfg;
    c.particles = n;
    rows.push_back(measure(c, "pf-t", "particles", n));
  }
  return rows;
}

inline std::string timing_csv(const std::vector<TimingRow>& rows) {
  std::string out = "filter,parameter,value,steps,mean_step_time\n";
  for (const auto& r : rows) {
    out += r.filter + "," + r.parameter + "," + std::to_string(r.value) + "," + std::to_string(r.steps) + "," +
           format_double(r.mean_step_time) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Remainder bound demonstration

struct BoundDemoResult {
  std::vector<Vector> boundary_images;
  std::vector<Vector> interior_images;
  RemainderBound sdp;
  RemainderBound interval;
  /// Fraction of interior images inside the SDP ellipsoid at slack 1e-6 and 1e-3.
  double inside_tight = 0.0;
  double inside_loose = 0.0;
};

inline DynamicsModel bound_demo_model(const BoundDemoConfig& bd) {
  if (bd.map == "linear") return make_linear_model(Matrix::Identity(2, 2), Matrix::Identity(2, 2));
  return make_linear_range_bearing_model(Matrix::Identity(2, 2), {bd.a, bd.b});
}

inline BoundDemoResult run_bound_demo(const BoundDemoConfig& bd, std::uint64_t seed, const ConicBackend& backend,
                                      const SolverOptions& solver = {}) {
  const DynamicsModel model = bound_demo_model(bd);
  const Matrix e = Eigen::LLT<Matrix>(bd.shape).matrixL();
  const RemainderEval ev(model, bd.center, e, MapKind::kMeasurement);
  SamplePlan plan;
  plan.count = bd.boundary_samples;
  BoundDemoResult out{{}, {}, bound_remainder(ev, plan, backend, solver), bound_remainder_interval(ev, backend, solver)};
  out.boundary_images = out.sdp.images;
  int tight = 0, loose = 0;
  for (const auto& u : sample_unit_ball(2, bd.interior_samples, seed)) {
    const Vector g = remainder(ev, u);
    out.interior_images.push_back(g);
    tight += contains(out.sdp.ellipsoid, g, 1e-6) ? 1 : 0;
    loose += contains(out.sdp.ellipsoid, g, 1e-3) ? 1 : 0;
  }
  out.inside_tight = static_cast<double>(tight) / bd.interior_samples;
  out.inside_loose = static_cast<double>(loose) / bd.interior_samples;
  return out;
}

/// Columns: set, x, y. Sets are boundary_image, interior_image, sdp_ellipse
/// and interval_ellipse (the ellipses as 200-point closed outlines).
inline std::string bound_demo_csv(const BoundDemoResult& r) {
  std::string out = "set,x,y\n";
  auto row = [&](const char* set, const Vector& p) {
    out += std::string(set) + "," + format_double(p(0)) + "," + format_double(p(1)) + "\n";
  };
  for (const auto& p : r.boundary_images) row("boundary_image", p);
  for (const auto& p : r.interior_images) row("interior_image", p);
  for (const auto& u : circle_grid(200)) {
    row("sdp_ellipse", r.sdp.ellipsoid.point_at(u));
  }
  for (const auto& u : circle_grid(200)) {
    row("interval_ellipse", r.interval.ellipsoid.point_at(u));
  }
  return out;
}

inline nlohmann::json bound_demo_summary(const BoundDemoResult& r) {
  const double ts = r.sdp.ellipsoid.trace(), ti = r.interval.ellipsoid.trace();
  return {{"sdp_trace", ts},
          {"interval_trace", ti},
          {"trace_ratio", ts > 0.0 && !r.sdp.degenerate ? nlohmann::json(ti / ts) : nlohmann::json(nullptr)},
          {"sdp_degenerate", r.sdp.degenerate},
          {"interval_degenerate", r.interval.degenerate},
          {"interior_inside_slack_1e-6", r.inside_tight},
          {"interior_inside_slack_1e-3", r.inside_loose},
          {"boundary_samples", r.boundary_images.size()},
          {"interior_samples", r.interior_images.size()}};
}

}  // namespace mcsmf
