#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "cqedmap/experiments.hpp"

using namespace cqedmap;

namespace {

constexpr double kPi = std::numbers::pi;

std::size_t nearest(std::span<const double> times, double t) {
  std::size_t best = 0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (std::abs(times[i] - t) < std::abs(times[best] - t)) best = i;
  }
  return best;
}

std::size_t row_of(const Table& t, const std::string& kind, int index) {
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (t.text(r, "kind") == kind && t.number(r, "index") == index) return r;
  }
  FAIL("missing peak row");
  return 0;
}

}  // namespace

TEST_CASE("find_extremum") {
  std::vector<double> t, v;
  for (int i = 0; i <= 300; ++i) {
    t.push_back(i * 0.01);
    v.push_back(std::sin(t.back()));
  }
  const Extremum e = find_extremum(t, v, ExtremumKind::Max, 0.0, 3.0);
  CHECK(std::abs(e.tau - kPi / 2) < 1e-4);
  CHECK(std::abs(e.value - 1.0) < 1e-4);
  CHECK_FALSE(e.on_boundary);
  CHECK(e.sample_value <= e.value);

  const Extremum edge = find_extremum(t, v, ExtremumKind::Min, 0.0, 3.0);
  CHECK(edge.on_boundary);
  CHECK(edge.tau == 0.0);
  CHECK_THROWS_AS(find_extremum(t, v, ExtremumKind::Max, 1.0, 1.015), std::invalid_argument);

  const auto first = first_local_extremum(t, v, ExtremumKind::Max, 0.0, 3.0);
  REQUIRE(first.has_value());
  CHECK(std::abs(first->tau - kPi / 2) < 1e-4);
  CHECK_FALSE(first_local_extremum(t, v, ExtremumKind::Min, 0.0, 3.0).has_value());

  CHECK(value_at(t, v, 0.005) == doctest::Approx(0.5 * std::sin(0.01)));
  CHECK(value_at(t, v, -1.0) == v.front());
}

TEST_CASE("fit_exponential") {
  std::vector<double> x, y;
  for (int i = 0; i < 10; ++i) {
    x.push_back(0.05 * (i + 1));
    y.push_back(1.7 * std::exp(-2.0 * x.back()));
  }
  const FitResult f = fit_exponential(x, y);
  CHECK(std::abs(f.rate - 2.0) < 1e-10);
  CHECK(std::abs(f.amplitude - 1.7) < 1e-10);
  CHECK(f.residual < 1e-12);

  y[3] = 0.0;
  CHECK_THROWS_AS(fit_exponential(x, y), std::invalid_argument);
  CHECK_THROWS_AS(fit_exponential(std::vector<double>{1, 2}, std::vector<double>{1, 2}), std::invalid_argument);
}

TEST_CASE("policies and config") {
  for (auto p : {SwitchOffPolicy::FixedTime, SwitchOffPolicy::MaxPe, SwitchOffPolicy::MinNf, SwitchOffPolicy::MaxNc}) {
    CHECK(parse_switch_off_policy(to_string(p)) == p);
  }
  CHECK_FALSE(parse_switch_off_policy("max").has_value());

  ScenarioConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.grid(5.0).t_end == 5.0);
  c.t_end = 2.0;
  CHECK(c.grid(5.0).t_end == 2.0);
  c.p_list = {0.1, 1.2};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("switch-off policies on the single-mode chain") {
  const SwitchOffChoice c = choose_switch_off(ModelParams{}, InitialStateSpec::ghz(), SwitchOffPolicy::MaxPe, 1e-3, 2 * kPi);
  CHECK(std::abs(c.tau_off - kMappingTime) < 1e-3);
  CHECK(c.pe_max == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(c.nc_max == doctest::Approx(0.25).epsilon(1e-4));
  CHECK(std::abs(c.period_pe - 2 * kMappingTime) < 2e-3);

  const SwitchOffChoice nc = choose_switch_off(ModelParams{}, InitialStateSpec::ghz(), SwitchOffPolicy::MaxNc, 1e-3, 2 * kPi);
  CHECK(std::abs(nc.tau_off - kMappingTime / 2) < 1e-3);
  const SwitchOffChoice nf = choose_switch_off(ModelParams{}, InitialStateSpec::ghz(), SwitchOffPolicy::MinNf, 1e-3, 2 * kPi);
  CHECK(std::abs(nf.tau_off - kMappingTime) < 1e-3);
}

TEST_CASE("fig1 run") {
  ScenarioConfig c;
  const Fig1Result r = run_fig1(c);
  const EvolutionRecord& s = r.series;
  const std::size_t i0 = nearest(s.times, kMappingTime);
  REQUIRE(std::abs(s.times[i0] - kMappingTime) < 1e-12);
  CHECK(std::abs(s.column("E_a")[i0] - 1.0) < 1e-4);
  CHECK(s.column("fidelity_a")[i0] >= 0.999);
  CHECK(s.column("N_f")[i0] <= 1e-4);

  const double stride = c.dt * c.sample_every;
  for (int m = 0; m < 3; ++m) {
    const std::size_t a = row_of(r.peaks, "atomic", m);
    CHECK(std::abs(r.peaks.number(a, "tau") - (kMappingTime + m * kPi)) <= stride);
    CHECK(r.peaks.number(a, "fidelity") >= 0.999);
    const std::size_t cv = row_of(r.peaks, "cavity", m);
    CHECK(std::abs(r.peaks.number(cv, "tau") - (kMappingTime + (m + 0.5) * kPi)) <= stride);
    CHECK(r.peaks.number(cv, "fidelity") >= 0.999);
    CHECK(r.peaks.number(cv, "boundary") == 0.0);
  }

  // Transient cavity entanglement peaks near tau_off / 2 on a mixed state.
  const std::size_t tr = row_of(r.peaks, "cavity_transient", 0);
  CHECK(std::abs(r.peaks.number(tr, "tau") - kMappingTime / 2) < 0.05);
  CHECK(r.peaks.number(tr, "purity") < 0.9);
  CHECK(r.peaks.number(tr, "negativity") > 0.1);

  const std::size_t so = row_of(r.peaks, "switch_off", 0);
  CHECK(std::abs(r.peaks.number(so, "tau") - kMappingTime) < 1e-3);

  SUBCASE("policy-located switch-off") {
    c.switch_off_policy = SwitchOffPolicy::MaxPe;
    c.t_end = 3.0;
    CHECK(std::abs(run_fig1(c).tau_off - kMappingTime) < 1e-3);
  }
}

TEST_CASE("werner plane") {
  ScenarioConfig c;
  c.t_end = kMappingTime + 2 * kPi;
  const std::vector<double> ps{0.0, 0.2, 0.4, 0.6};
  const WernerResult w = run_werner_plane(c, ps, ps);
  CHECK(w.declined == 0);
  CHECK(w.map.rows.size() == w.sections.rows.size());

  const WernerComponents comps = werner_components(c.base, c.grid(0.0));
  const std::size_t i0 = nearest(comps.times, kMappingTime);
  const auto b = werner_class_boundaries(comps, i0);
  CHECK(std::abs(b[0] - 2.0 / 7) < 1e-3);
  CHECK(std::abs(b[1] - 4.0 / 7) < 1e-3);
  CHECK(std::abs(b[2] - 0.8) < 1e-3);

  // p = 0 matches the pure-state path and reaches E = 1 at each atomic mapping time.
  const Fig1Result f = run_fig1(c);
  std::size_t k = 0;
  for (std::size_t r = 0; r < w.sections.rows.size(); ++r) {
    if (w.sections.number(r, "p") != 0.0) continue;
    REQUIRE(k < f.series.size());
    CHECK(std::abs(w.sections.number(r, "tau") - f.series.times[k]) < 1e-12);
    CHECK(std::abs(w.sections.number(r, "E_a") - f.series.column("E_a")[k]) < 1e-8);
    ++k;
  }
  for (int m = 0; m < 2; ++m) {
    const std::size_t i = nearest(comps.times, kMappingTime + m * kPi);
    CHECK(tripartite_negativity(comps.mix(i, 0.0)[0]) > 1 - 1e-4);
  }

  // At p = 0.4 no sampled time has all three groups entangled.
  for (std::size_t r = 0; r < w.sections.rows.size(); ++r) {
    if (w.sections.number(r, "p") != 0.4) continue;
    const bool all = w.sections.number(r, "E_a") > 1e-9 && w.sections.number(r, "E_c") > 1e-9 &&
                     w.sections.number(r, "E_f") > 1e-9;
    CHECK_FALSE(all);
  }

  // Labels follow the negativity: a vanishing E is never a genuine class.
  for (std::size_t r = 0; r < w.map.rows.size(); ++r) {
    if (w.map.number(r, "E_a") == 0.0) CHECK(w.map.text(r, "label_a") == "FullySeparable");
    if (w.map.number(r, "w_ghz_a") < 0) CHECK(w.map.number(r, "w_bisep_a") < 0);
  }
}

TEST_CASE("cavity decay sweep") {
  ScenarioConfig c;
  c.evolution.n_trajectories = 400;
  const std::vector<double> kappas{0.05, 0.1, 0.3, 0.5};
  const std::vector<double> anchors{0.1};
  const SweepResult s = sweep_cavity_decay(c, kappas, anchors);
  REQUIRE(s.table.rows.size() == kappas.size());
  CHECK(std::abs(s.table.number(1, "F_a") - 0.93) < 0.02);
  CHECK(std::abs(s.table.number(1, "F_c") - 0.83) < 0.02);
  for (const char* q : {"F_a", "E_a", "F_c", "E_c"}) {
    for (std::size_t i = 1; i < kappas.size(); ++i) CHECK(s.table.number(i, q) < s.table.number(i - 1, q));
  }
  REQUIRE(s.fits.rows.size() == 4);
  for (std::size_t r = 0; r < 4; ++r) {
    CHECK(s.fits.number(r, "rate") > 0.0);
    CHECK(s.fits.number(r, "residual") < 0.05);
  }
  REQUIRE(s.cross_checks.size() == 4);
  for (const auto& x : s.cross_checks) CHECK(x.z() < 4.0);

  SUBCASE("worker count does not change the table") {
    ScenarioConfig one = c;
    one.evolution.n_workers = 1;
    ScenarioConfig three = c;
    three.evolution.n_workers = 3;
    const std::vector<double> ks{0.2, 0.4};
    const SweepResult a = sweep_cavity_decay(one, ks, {});
    const SweepResult b = sweep_cavity_decay(three, ks, {});
    CHECK(a.table.rows == b.table.rows);
  }
}

TEST_CASE("fiber decay sweep") {
  ScenarioConfig c;
  const std::vector<double> kf{1e-6, 0.5, 1.0};
  const SweepResult s = sweep_fiber_decay(c, kf, {});
  CHECK(std::abs(s.table.number(0, "p_e") - 0.5) < 1e-5);
  CHECK(std::abs(s.table.number(0, "N_c") - 0.25) < 1e-4);
  CHECK(std::abs(s.table.number(0, "F_a") - 1.0) < 1e-5);
  CHECK(std::abs(s.table.number(0, "E_a") - 1.0) < 1e-4);
  for (const char* q : {"p_e", "N_c", "E_a", "F_a"}) CHECK(s.table.number(2, q) < s.table.number(1, q));
  CHECK(s.fits.rows.size() == 4);
  CHECK_THROWS_AS(sweep_fiber_decay(c, std::vector<double>{0.0}, {}), std::invalid_argument);
}

TEST_CASE("multimode") {
  ScenarioConfig c;
  c.sample_every = 1;
  const std::vector<double> nus{0.0, 0.7, 1.4};
  const MultimodeResult m = run_multimode(c, nus, SwitchOffPolicy::MaxNc);
  REQUIRE(m.table.rows.size() == 3);
  CHECK(std::abs(m.table.number(0, "period_pe") - 2 * kPi / std::numbers::sqrt2) < 0.05);
  CHECK(std::abs(m.table.number(0, "tau_off") - kMappingTime / 2) < 1e-3);
  for (std::size_t i = 1; i < 3; ++i) {
    CHECK(m.table.number(i, "pe_max") < m.table.number(i - 1, "pe_max"));
    CHECK(m.table.number(i, "nc_max") > m.table.number(i - 1, "nc_max"));
    CHECK(m.table.number(i, "period_pe") < m.table.number(i - 1, "period_pe"));
    CHECK(m.table.number(i, "E_a") > m.table.number(i - 1, "E_a"));
  }
  CHECK(m.table.text(0, "policy") == "max_nc");
  CHECK(m.traces.rows.size() > 3);
}

TEST_CASE("switch-off robustness") {
  ScenarioConfig c;
  const std::vector<double> deltas{-0.1, 0.0, 0.1, 0.2};
  const RobustnessResult r = robustness_tau_off(c, deltas);
  for (std::size_t i = 0; i < 3; ++i) CHECK(r.table.number(i, "fidelity") >= 0.999);
  CHECK(r.table.number(0, "fidelity") < r.table.number(1, "fidelity"));
  // A late switch-off does not touch the first atomic peak, which occurs while
  // the drive is still on.
  CHECK(r.table.number(3, "tau_peak") < r.table.number(3, "tau_off"));
  CHECK(std::abs(r.table.number(3, "fidelity") - r.table.number(2, "fidelity")) < 1e-5);
  CHECK_THROWS_AS(robustness_tau_off(c, std::vector<double>{1.5}), std::invalid_argument);
}
