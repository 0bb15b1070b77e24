// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "mcsmf/bench.hpp"
#include "mcsmf/mcsmf.hpp"
#include "oracles.hpp"

using namespace mcsmf;
using namespace test_oracles;

namespace {

const std::string kConfigDir = MCSMF_CONFIG_DIR;
const InteriorPointBackend kBackend;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// 1. Linear toy: every MCSMF ellipsoid contains the truth.
Outcome linear_containment() {
  ScenarioConfig cfg = load_scenario(kConfigDir + "/toy_linear.cfg");
  cfg.trials = 100;
  cfg.horizon = 20;
  cfg.filters = {"mcsmf"};
  const ExperimentResult res = run_experiment(cfg, kBackend);
  const FilterResult& fr = res.filter("mcsmf");
  int aborted = 0;
  for (const auto& t : fr.trials) aborted += t.failure ? 1 : 0;
  const double rate = overall_containment(fr, cfg.horizon);
  return {rate == 1.0 && aborted == 0,
          "containment " + fmt("%.6f", rate) + " over 100x20 steps, aborted trials " + std::to_string(aborted)};
}

// Shared range-bearing experiment for criteria 2, 6 and 7.
const ExperimentResult& range_bearing_run(ScenarioConfig& cfg_out) {
  static ScenarioConfig cfg = [] {
    ScenarioConfig c = load_scenario(kConfigDir + "/range_bearing.cfg");
    c.trials = 50;
    c.horizon = 40;
    c.filter_options.boundary_plan.count = 50;
    c.filters = {"mcsmf", "pf-t", "pf-g", "pf-u"};
    return c;
  }();
  static const ExperimentResult res = run_experiment(cfg, kBackend);
  cfg_out = cfg;
  return res;
}

// 2. Range-bearing containment over 50 trials x 40 steps.
Outcome range_bearing_containment() {
  ScenarioConfig cfg;
  const ExperimentResult& res = range_bearing_run(cfg);
  const double rate = overall_containment(res.filter("mcsmf"), cfg.horizon);
  return {rate >= 0.99, "containment " + fmt("%.6f", rate) + " (need >= 0.99)"};
}

// 3. Boundary samples suffice for the offset-sensor remainder.
Outcome boundary_sufficiency() {
  const ScenarioConfig cfg = load_scenario(kConfigDir + "/offset_sensor_bound.cfg");
  BoundDemoConfig bd = *cfg.bound_demo;
  bd.boundary_samples = 50;
  bd.interior_samples = 10000;
  const BoundDemoResult r = run_bound_demo(bd, 2024, kBackend);
  return {r.inside_tight >= 0.999 && r.inside_loose == 1.0,
          "inside at slack 1e-6: " + fmt("%.4f", r.inside_tight) + " (need >= 0.999), at 1e-3: " +
              fmt("%.4f", r.inside_loose) + " (need 1)"};
}

// 4. Remainder sign: det(J_g) >= -1e-10 on the ball and g = 0 on the zero line.
Outcome remainder_sign() {
  Rng rng = make_rng(404);
  double worst_det = std::numeric_limits<double>::infinity();
  double worst_norm = 0.0;
  for (int c = 0; c < 20; ++c) {
    const PositionCase pc = random_admissible_case(rng);
    const DynamicsModel m = make_linear_range_bearing_model(Matrix::Identity(2, 2), {pc.a, pc.b});
    const RemainderEval ev(m, pc.center, pc.e, MapKind::kMeasurement);
    for (const auto& u : sample_unit_ball(2, 10000, rng)) {
      worst_det = std::min(worst_det, remainder_jacobian(ev, u).determinant());
    }
    const ZeroLine zl = remainder_zero_line(pc.center, pc.e, pc.a, pc.b);
    Vector dir = vec({zl.d, -zl.c});
    dir.normalize();
    for (int i = 0; i < 100; ++i) {
      const double t = -1.0 + 2.0 * i / 99.0;
      worst_norm = std::max(worst_norm, remainder(ev, t * dir).norm());
    }
  }
  return {worst_det >= -1e-10 && worst_norm <= 1e-10,
          "min det " + fmt("%.3e", worst_det) + ", max |g| on zero line " + fmt("%.3e", worst_norm)};
}

// 5. The sampled SDP bound is no larger than the interval-method bound.
Outcome sdp_vs_interval() {
  Rng rng = make_rng(505);
  int checked = 0, ok = 0;
  double worst_ratio = std::numeric_limits<double>::infinity();
  auto compare = [&](const DynamicsModel& m, const Vector& c, const Matrix& e) {
    const RemainderEval ev(m, c, e, MapKind::kMeasurement);
    const double sdp = bound_remainder(ev, SamplePlan{}, kBackend).ellipsoid.trace();
    const double interval = bound_remainder_interval(ev, kBackend).ellipsoid.trace();
    ++checked;
    ok += sdp <= interval ? 1 : 0;
    worst_ratio = std::min(worst_ratio, interval / sdp);
  };
  compare(offset_sensor_model(), vec({80, 130}), offset_sensor_factor());
  int random_done = 0;
  while (random_done < 10) {
    const PositionCase pc = random_admissible_case(rng);
    const DynamicsModel m = make_linear_range_bearing_model(Matrix::Identity(2, 2), {pc.a, pc.b});
    try {
      compare(m, pc.center, pc.e);
      ++random_done;
    } catch (const IntervalBlowup&) {
      // The interval method is undefined here; draw another configuration.
    }
  }
  return {ok == checked, std::to_string(ok) + "/" + std::to_string(checked) +
                             " configurations, min interval/SDP trace ratio " + fmt("%.3f", worst_ratio)};
}

// 6. Error orderings on the range-bearing scenario.
Outcome error_orderings() {
  ScenarioConfig cfg;
  const ExperimentResult& res = range_bearing_run(cfg);
  auto err = [&](const char* tag) { return mean_position_error(filter_curves(res, tag, cfg.horizon)); };
  auto done = [&](const char* tag) { return filter_curves(res, tag, cfg.horizon).completed_trials; };
  const double e_smf = err("mcsmf"), e_t = err("pf-t"), e_g = err("pf-g"), e_u = err("pf-u");
  const bool known = e_t <= e_smf, vs_g = e_smf <= e_g, vs_u = e_smf <= e_u;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "mean position error MCSMF %.4f, PF-T %.4f, PF-G %.4f, PF-U %.4f (completed %d/%d/%d/%d); "
                "PF-T<=MCSMF %s, MCSMF<=PF-G %s, MCSMF<=PF-U %s",
                e_smf, e_t, e_g, e_u, done("mcsmf"), done("pf-t"), done("pf-g"), done("pf-u"),
                known ? "yes" : "no", vs_g ? "yes" : "no", vs_u ? "yes" : "no");
  return {known && vs_g && vs_u, buf};
}

// 7. PF-T's 3-sigma band misses the true position somewhere; MCSMF does not.
Outcome band_violation() {
  ScenarioConfig cfg;
  const ExperimentResult& res = range_bearing_run(cfg);
  const FilterResult& pf = res.filter("pf-t");
  int misses = 0;
  for (std::size_t t = 0; t < pf.trials.size(); ++t) {
    const FilterTrial& ft = pf.trials[t];
    for (std::size_t k = 0; k < ft.estimates.size(); ++k) {
      const Vector& x = res.records[t].truth[k];
      for (int i = 0; i < 2; ++i) {
        if (x(i) < ft.band_lower[k](i) || x(i) > ft.band_upper[k](i)) {
          ++misses;
          break;
        }
      }
    }
  }
  const double smf_rate = overall_containment(res.filter("mcsmf"), cfg.horizon);
  return {misses >= 1 && smf_rate >= 0.99, "PF-T band misses " + std::to_string(misses) +
                                               " (trial, step) pairs; MCSMF containment " + fmt("%.6f", smf_rate)};
}

// 8. Enclosing ellipsoid of the four axis points.
Outcome enclosing_oracle() {
  const std::vector<Vector> pts{vec({1, 0}), vec({-1, 0}), vec({0, 1}), vec({0, -1})};
  const RemainderBound rb = fit_enclosing_ellipsoid(pts, kBackend);
  const double oracle = grid_search_min_trace(pts);
  const double center = rb.ellipsoid.center().norm(), trace = rb.ellipsoid.trace();
  const bool pass = center <= 1e-6 && std::abs(trace - 2.0) <= 1e-4 && trace <= oracle + 1e-6 &&
                    std::abs(trace - oracle) <= 0.02;
  return {pass, "center offset " + fmt("%.2e", center) + ", trace " + fmt("%.8f", trace) + ", grid oracle " +
                    fmt("%.4f", oracle)};
}

// 9. Objectives do not depend on the chosen null-space basis.
Outcome null_space_invariance() {
  const ScenarioConfig cfg = load_scenario(kConfigDir + "/range_bearing.cfg");
  const TrialRecord rec = simulate_trial(cfg, 0);
  const DynamicsModel model = cfg.model();
  const Ellipsoid init = cfg.initial_ellipsoid();
  const auto bound = [&](const Ellipsoid& e, MapKind kind) {
    return bound_remainder(RemainderEval(model, e.center(), e.factor().lower, kind), SamplePlan{}, kBackend).ellipsoid;
  };
  const Ellipsoid ef = bound(init, MapKind::kProcess), eh = bound(init, MapKind::kMeasurement);
  const LmiAssembly pa = assemble_prediction(init, rec.measurements[0], model, cfg.noise_bounds(), ef, eh);
  const FilterState pred = predict_step({init, 0, {}}, rec.measurements[0], model, cfg.noise_bounds(), ef, eh, kBackend);
  const LmiAssembly ua = assemble_update(pred.estimate, rec.measurements[1], model, cfg.noise_bounds(),
                                         bound(pred.estimate, MapKind::kMeasurement));
  Rng rng = make_rng(909);
  double worst = 0.0;
  for (const LmiAssembly* a : {&pa, &ua}) {
    const double base = solve_step<InfeasibleUpdate>(*a, kBackend, {}, 0, "invariance").report.objective;
    for (int rep = 0; rep < 10; ++rep) {
      LmiAssembly rotated = *a;
      rotated.psi_perp = a->psi_perp * random_orthonormal(a->psi_perp.cols(), rng);
      const double obj = solve_step<InfeasibleUpdate>(rotated, kBackend, {}, 0, "invariance").report.objective;
      worst = std::max(worst, std::abs(obj - base) / std::abs(base));
    }
  }
  return {worst <= 1e-6, "max relative change of tr(P) " + fmt("%.3e", worst)};
}

// 10. Mean per-step time grows with sample and particle counts.
Outcome timing_monotone() {
  const ScenarioConfig cfg = load_scenario(kConfigDir + "/range_bearing.cfg");
  const auto rows = run_timing(cfg, {10, 50, 200}, {100, 1000, 10000}, 2, kBackend);
  bool pass = true;
  std::string detail;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const TimingRow& r = rows[i];
    pass = pass && r.steps >= 10;
    if (i > 0 && rows[i - 1].filter == r.filter) pass = pass && r.mean_step_time >= rows[i - 1].mean_step_time;
    detail += (detail.empty() ? "" : ", ") + r.filter + "@" + std::to_string(r.value) + " " +
              fmt("%.3e", r.mean_step_time) + "s/" + std::to_string(r.steps);
  }
  return {pass, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"linear containment", linear_containment},
      {"range-bearing containment", range_bearing_containment},
      {"boundary-sample sufficiency", boundary_sufficiency},
      {"remainder sign and zero line", remainder_sign},
      {"SDP tighter than interval bound", sdp_vs_interval},
      {"error orderings", error_orderings},
      {"PF-T band violation", band_violation},
      {"enclosing-ellipsoid oracle", enclosing_oracle},
      {"null-space invariance", null_space_invariance},
      {"timing monotonicity", timing_monotone},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& err) {
      o = {false, std::string("exception: ") + err.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s criterion %zu (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
