#include "cqedmap/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <functional>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <thread>

namespace cqedmap {

namespace {

constexpr double kPi = std::numbers::pi;

// Runs f(i) for i < n on up to `workers` threads; results are written by index.
template <class F>
void parallel_for(std::size_t n, int workers, F&& f) {
  std::size_t w = workers > 0 ? static_cast<std::size_t>(workers) : std::max(1u, std::thread::hardware_concurrency());
  w = std::min(w, n);
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < w; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          f(i);
        } catch (...) {
          const std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// Exact pure-state path whenever nothing dissipates.
EvolutionOptions options_for(const ScenarioConfig& config, const ModelParams& params) {
  EvolutionOptions o = config.evolution;
  if (!params.dissipative()) o.method = Method::Schrodinger;
  o.reference = config.initial.reference();
  return o;
}

EvolutionRecord run(const ScenarioConfig& config, const ModelParams& params, const TimeGrid& grid,
                    const EvolutionOptions& options) {
  return evolve(params, initial_state(config.initial, build_space(params)), grid, options);
}

void append_warnings(std::vector<std::string>& out, const std::vector<std::string>& in, const std::string& context) {
  for (const auto& w : in) out.push_back(context + ": " + w);
}

std::string format_value(const std::string& key, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s=%.6g", key.c_str(), v);
  return buf;
}

std::vector<double> ln_positive(std::span<const double> ys) {
  std::vector<double> out;
  out.reserve(ys.size());
  for (double y : ys) {
    if (!(y > 0.0) || !std::isfinite(y)) {
      throw std::invalid_argument("fit_exponential: every y must be positive and finite");
    }
    out.push_back(std::log(y));
  }
  return out;
}

void add_fits(Table& fits, const std::string& sweep, const Table& table, const std::string& x,
              const std::vector<std::string>& quantities) {
  std::vector<double> xs;
  for (std::size_t r = 0; r < table.rows.size(); ++r) xs.push_back(table.number(r, x));
  for (const auto& q : quantities) {
    std::vector<double> ys;
    for (std::size_t r = 0; r < table.rows.size(); ++r) ys.push_back(table.number(r, q));
    const FitResult f = fit_exponential(xs, ys);
    fits.rows.push_back({sweep, q, f.amplitude, f.rate, f.residual});
  }
}

Table fits_table() {
  return Table{{"sweep", "quantity", "amplitude", "rate", "residual"}, {}};
}

struct Probe {
  std::string quantity;
  std::string column;
  std::size_t index;
};

std::size_t sample_index(const EvolutionRecord& r, double tau) {
  std::size_t best = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (std::abs(r.times[i] - tau) < std::abs(r.times[best] - tau)) best = i;
  }
  return best;
}

// Reruns the anchor with ME and MCWF on the same grid and compares probes
// picked on the ME record.
void cross_check(const ScenarioConfig& config, const ModelParams& params, double rate,
                 const std::function<std::vector<Probe>(const EvolutionRecord&)>& probes_of, SweepResult& out) {
  const TimeGrid grid = config.grid(params.tau_off + kPi);
  EvolutionOptions me = options_for(config, params);
  me.method = Method::MasterEquation;
  EvolutionOptions mc = me;
  mc.method = Method::MCWF;
  const EvolutionRecord a = run(config, params, grid, me);
  const EvolutionRecord b = run(config, params, grid, mc);
  append_warnings(out.warnings, b.warnings, "mcwf " + format_value("rate", rate));
  for (const auto& p : probes_of(a)) {
    out.cross_checks.push_back({rate, p.quantity, a.times[p.index], a.column(p.column)[p.index],
                                b.column(p.column)[p.index], b.std_error(p.column)[p.index]});
  }
}

void require_hamiltonian(const ModelParams& p, const char* who) {
  if (p.dissipative()) throw std::invalid_argument(std::string(who) + ": requires zero dissipation rates");
}

}  // namespace

std::string_view to_string(SwitchOffPolicy policy) {
  switch (policy) {
    case SwitchOffPolicy::FixedTime:
      return "fixed";
    case SwitchOffPolicy::MaxPe:
      return "max_pe";
    case SwitchOffPolicy::MinNf:
      return "min_nf";
    case SwitchOffPolicy::MaxNc:
      return "max_nc";
  }
  return "?";
}

std::optional<SwitchOffPolicy> parse_switch_off_policy(std::string_view text) {
  for (auto p : {SwitchOffPolicy::FixedTime, SwitchOffPolicy::MaxPe, SwitchOffPolicy::MinNf, SwitchOffPolicy::MaxNc}) {
    if (to_string(p) == text) return p;
  }
  return std::nullopt;
}

TimeGrid ScenarioConfig::grid(double default_end) const {
  return TimeGrid{0.0, t_end.value_or(default_end), dt, sample_every};
}

void ScenarioConfig::validate() const {
  base.validate();
  initial.validate();
  evolution.validate();
  grid(1.0).validate();
  if (t_end && !(*t_end > 0.0)) throw std::invalid_argument("ScenarioConfig: t_end must be > 0");
  for (double p : p_list) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("ScenarioConfig: p_list entries must lie in [0, 1]");
  }
  for (double k : kappa_list) {
    if (!(k > 0.0) || !std::isfinite(k)) throw std::invalid_argument("ScenarioConfig: kappa_list entries must be > 0");
  }
  for (double n : nu_list) {
    if (!(n >= 0.0) || !std::isfinite(n)) throw std::invalid_argument("ScenarioConfig: nu_list entries must be >= 0");
  }
  for (double d : delta_list) {
    if (!(d > -1.0) || !std::isfinite(d)) throw std::invalid_argument("ScenarioConfig: delta_list entries must be > -1");
  }
  for (double a : anchor_list) {
    if (!(a > 0.0) || !std::isfinite(a)) throw std::invalid_argument("ScenarioConfig: anchor_list entries must be > 0");
  }
}

std::size_t Table::column_index(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return i;
  }
  throw std::out_of_range("Table: no column " + std::string(name));
}

double Table::number(std::size_t row, std::string_view column) const {
  return std::get<double>(rows.at(row).at(column_index(column)));
}

const std::string& Table::text(std::size_t row, std::string_view column) const {
  return std::get<std::string>(rows.at(row).at(column_index(column)));
}

Extremum find_extremum(std::span<const double> times, std::span<const double> values, ExtremumKind kind, double lo,
                       double hi) {
  if (times.size() != values.size()) throw std::invalid_argument("find_extremum: size mismatch");
  std::vector<std::size_t> in;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] >= lo && times[i] <= hi) in.push_back(i);
  }
  if (in.size() < 3) throw std::invalid_argument("find_extremum: fewer than 3 samples in window");
  const double sign = kind == ExtremumKind::Max ? 1.0 : -1.0;
  std::size_t best = 0;
  for (std::size_t k = 1; k < in.size(); ++k) {
    if (sign * values[in[k]] > sign * values[in[best]]) best = k;
  }
  Extremum e;
  e.index = in[best];
  e.tau = times[e.index];
  e.value = e.sample_value = values[e.index];
  if (best == 0 || best + 1 == in.size()) {
    e.on_boundary = true;
    return e;
  }
  const double t0 = times[in[best - 1]], t1 = times[in[best]], t2 = times[in[best + 1]];
  const double v0 = values[in[best - 1]], v1 = values[in[best]], v2 = values[in[best + 1]];
  const double d01 = (v1 - v0) / (t1 - t0);
  const double d12 = (v2 - v1) / (t2 - t1);
  const double a = (d12 - d01) / (t2 - t0);
  if (a == 0.0) return e;
  const double b = d01 - a * (t0 + t1);
  const double ts = -b / (2 * a);
  if (ts < t0 || ts > t2) return e;
  e.tau = ts;
  e.value = v1 + d01 * (ts - t1) + a * (ts - t1) * (ts - t0);
  return e;
}

std::optional<Extremum> first_local_extremum(std::span<const double> times, std::span<const double> values,
                                             ExtremumKind kind, double lo, double hi) {
  if (times.size() != values.size()) throw std::invalid_argument("first_local_extremum: size mismatch");
  const double sign = kind == ExtremumKind::Max ? 1.0 : -1.0;
  for (std::size_t i = 1; i + 1 < times.size(); ++i) {
    if (times[i - 1] < lo || times[i + 1] > hi) continue;
    if (sign * values[i] > sign * values[i - 1] && sign * values[i] >= sign * values[i + 1]) {
      return find_extremum(times, values, kind, times[i - 1], times[i + 1]);
    }
  }
  return std::nullopt;
}

double value_at(std::span<const double> times, std::span<const double> values, double tau) {
  if (times.empty() || times.size() != values.size()) throw std::invalid_argument("value_at: bad series");
  if (tau <= times.front()) return values.front();
  if (tau >= times.back()) return values.back();
  const auto it = std::upper_bound(times.begin(), times.end(), tau);
  const std::size_t k = static_cast<std::size_t>(it - times.begin());
  const double w = (tau - times[k - 1]) / (times[k] - times[k - 1]);
  return (1 - w) * values[k - 1] + w * values[k];
}

FitResult fit_exponential(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("fit_exponential: size mismatch");
  if (xs.size() < 3) throw std::invalid_argument("fit_exponential: need at least 3 points");
  const std::vector<double> ly = ln_positive(ys);
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i] / n;
    my += ly[i] / n;
  }
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ly[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_exponential: xs are all equal");
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double ss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ly[i] - (intercept + slope * xs[i]);
    ss += r * r;
  }
  return {std::exp(intercept), -slope, std::sqrt(ss / n)};
}

SwitchOffChoice choose_switch_off(const ModelParams& params, const InitialStateSpec& initial, SwitchOffPolicy policy,
                                  double dt, double horizon) {
  ModelParams p = params;
  p.tau_off = std::numeric_limits<double>::infinity();
  EvolutionOptions o;
  o.method = p.dissipative() ? Method::MasterEquation : Method::Schrodinger;
  o.reference = initial.reference();
  const EvolutionRecord r = evolve(p, initial_state(initial, build_space(p)), TimeGrid{0.0, horizon, dt, 1}, o);

  auto first = [&](std::string_view column, ExtremumKind kind) {
    const auto e = first_local_extremum(r.times, r.column(column), kind, 0.0, horizon);
    if (!e) {
      throw std::runtime_error("choose_switch_off: no local extremum of " + std::string(column) +
                               " before tau = " + std::to_string(horizon));
    }
    return *e;
  };
  const Extremum pe = first("p_e", ExtremumKind::Max);
  const Extremum nf = first("N_f", ExtremumKind::Min);
  const Extremum nc = first("N_c", ExtremumKind::Max);
  const Extremum nc_min = first("N_c", ExtremumKind::Min);

  SwitchOffChoice c;
  c.pe_max = pe.value;
  c.pe_max_time = pe.tau;
  c.nf_min = nf.value;
  c.nc_max = nc.value;
  c.period_pe = 2 * pe.tau;
  c.period_nc = 2 * nc_min.tau;
  switch (policy) {
    case SwitchOffPolicy::FixedTime:
      c.tau_off = params.tau_off;
      break;
    case SwitchOffPolicy::MaxPe:
      c.tau_off = pe.tau;
      break;
    case SwitchOffPolicy::MinNf:
      c.tau_off = nf.tau;
      break;
    case SwitchOffPolicy::MaxNc:
      c.tau_off = nc.tau;
      break;
  }
  return c;
}

Fig1Result run_fig1(const ScenarioConfig& config) {
  config.validate();
  ModelParams p = config.base;
  const SwitchOffChoice located =
      choose_switch_off(p, config.initial, SwitchOffPolicy::MaxPe, std::min(config.dt, 1e-3), 2 * kPi);
  if (config.switch_off_policy != SwitchOffPolicy::FixedTime) {
    p.tau_off = choose_switch_off(p, config.initial, config.switch_off_policy, config.dt, 2 * kPi).tau_off;
  }
  const TimeGrid grid = config.grid(p.tau_off + 3 * kPi);
  Fig1Result out;
  out.tau_off = p.tau_off;
  out.series = run(config, p, grid, options_for(config, p));
  const EvolutionRecord& r = out.series;

  Table& t = out.peaks;
  t.columns = {"kind", "index", "tau_expected", "tau", "fidelity", "negativity", "purity", "phase", "boundary"};
  t.rows.push_back({std::string("switch_off"), 0.0, p.tau_off, located.tau_off, located.pe_max, 0.0, 0.0, 0.0, 0.0});

  auto peak = [&](const char* kind, int m, double expected, char g) {
    const double lo = expected - kPi / 4;
    const double hi = std::min(expected + kPi / 4, grid.t_end);
    if (expected > grid.t_end) return;
    const std::string suffix(1, g);
    const Extremum e = find_extremum(r.times, r.column("fidelity_" + suffix), ExtremumKind::Max, lo, hi);
    t.rows.push_back({std::string(kind), static_cast<double>(m), expected, e.tau, e.value,
                      r.column("E_" + suffix)[e.index], r.column("purity_" + suffix)[e.index],
                      r.column("phase_" + suffix)[e.index], e.on_boundary ? 1.0 : 0.0});
  };
  for (int m = 0; m < 3; ++m) {
    peak("atomic", m, p.tau_off + m * kPi, 'a');
    peak("cavity", m, p.tau_off + (m + 0.5) * kPi, 'c');
  }
  const Extremum ec = find_extremum(r.times, r.column("E_c"), ExtremumKind::Max, 0.0, std::min(p.tau_off, grid.t_end));
  t.rows.push_back({std::string("cavity_transient"), 0.0, p.tau_off / 2, ec.tau, r.column("fidelity_c")[ec.index],
                    ec.value, r.column("purity_c")[ec.index], r.column("phase_c")[ec.index],
                    ec.on_boundary ? 1.0 : 0.0});
  return out;
}

std::array<Matrix, 3> WernerComponents::mix(std::size_t sample, double p) const {
  const auto w = werner_weights(p);
  std::array<Matrix, 3> out;
  for (int g = 0; g < 3; ++g) {
    out[g] = Matrix::Zero(8, 8);
    for (int k = 0; k < 8; ++k) {
      if (w[k] != 0.0) out[g] += w[k] * states[sample][k][g];
    }
  }
  return out;
}

WernerComponents werner_components(const ModelParams& params, const TimeGrid& grid) {
  require_hamiltonian(params, "werner_components");
  const HilbertSpace space = build_space(params);
  const auto vecs = werner_eigenvectors(space);
  EvolutionOptions o;
  o.method = Method::Schrodinger;
  o.keep_reduced_states = true;
  std::vector<EvolutionRecord> runs(vecs.size());
  parallel_for(vecs.size(), o.n_workers, [&](std::size_t k) { runs[k] = evolve_schrodinger(params, vecs[k], grid, o); });

  WernerComponents c;
  c.times = runs[0].times;
  c.states.resize(c.times.size());
  for (std::size_t k = 0; k < runs.size(); ++k) {
    append_warnings(c.warnings, runs[k].warnings, "werner component " + std::to_string(k));
    for (std::size_t s = 0; s < c.times.size(); ++s) {
      for (int g = 0; g < 3; ++g) c.states[s][k][g] = runs[k].reduced_states[s][g];
    }
  }
  return c;
}

WernerResult run_werner_plane(const ScenarioConfig& config, std::span<const double> p_grid,
                              std::span<const double> section_ps) {
  config.validate();
  for (double p : p_grid) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("run_werner_plane: p outside [0, 1]");
  }
  const ModelParams& params = config.base;
  const WernerComponents comps = werner_components(params, config.grid(params.tau_off + 2 * kPi));
  const std::size_t ns = comps.times.size();

  WernerResult out;
  out.warnings = comps.warnings;
  out.map.columns = {"tau", "p", "label_a", "label_c", "label_f", "E_a", "E_c", "E_f", "w_ghz_a", "w_bisep_a"};
  std::vector<std::vector<std::vector<Cell>>> blocks(p_grid.size());
  std::vector<std::size_t> declined(p_grid.size(), 0);
  parallel_for(p_grid.size(), config.evolution.n_workers, [&](std::size_t i) {
    const double p = p_grid[i];
    blocks[i].reserve(ns);
    for (std::size_t s = 0; s < ns; ++s) {
      const auto rho = comps.mix(s, p);
      std::vector<Cell> row{comps.times[s], p};
      std::array<double, 3> e{};
      WitnessReport wa{};
      for (int g = 0; g < 3; ++g) {
        const Classification c = classify(rho[g]);
        if (c.label) {
          row.emplace_back(std::string(to_string(*c.label)));
        } else {
          row.emplace_back(std::string("declined"));
          ++declined[i];
        }
        e[g] = c.negativity;
        if (g == 0) wa = c.witness;
      }
      for (double v : e) row.emplace_back(v);
      row.emplace_back(wa.w_ghz);
      row.emplace_back(wa.w_bisep);
      blocks[i].push_back(std::move(row));
    }
  });
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    for (auto& row : blocks[i]) out.map.rows.push_back(std::move(row));
    out.declined += declined[i];
  }
  if (out.declined > 0) out.warnings.push_back(std::to_string(out.declined) + " classification(s) declined");

  out.sections.columns = {"tau", "p", "E_a", "E_c", "E_f"};
  out.events.columns = {"p", "group", "kind", "tau"};
  for (double p : section_ps) {
    std::array<std::vector<double>, 3> e;
    for (std::size_t s = 0; s < ns; ++s) {
      const auto rho = comps.mix(s, p);
      std::vector<Cell> row{comps.times[s], p};
      for (int g = 0; g < 3; ++g) {
        e[g].push_back(tripartite_negativity(rho[g]));
        row.emplace_back(e[g].back());
      }
      out.sections.rows.push_back(std::move(row));
    }
    for (int g = 0; g < 3; ++g) {
      const SubsystemGroup group = kGroups[g];
      for (const EsdEvent& ev : detect_esd_esb(comps.times, e[g], group, ClassifyOptions{}.eps_e)) {
        out.events.rows.push_back({p, std::string(1, group_tag(group)), std::string(to_string(ev.kind)), ev.time});
      }
    }
  }
  return out;
}

std::array<double, 3> werner_class_boundaries(const WernerComponents& components, std::size_t sample, double tol) {
  auto rank = [&](double p) {
    const Classification c = classify(components.mix(sample, p)[0]);
    if (!c.label) throw std::runtime_error("werner_class_boundaries: " + c.diagnostic);
    return static_cast<int>(*c.label);
  };
  std::array<double, 3> out{};
  for (int k = 0; k < 3; ++k) {
    double lo = 0.0, hi = 1.0;
    if (rank(lo) > k || rank(hi) <= k) {
      out[k] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    while (hi - lo > tol) {
      const double mid = 0.5 * (lo + hi);
      (rank(mid) <= k ? lo : hi) = mid;
    }
    out[k] = 0.5 * (lo + hi);
  }
  return out;
}

double CrossCheck::z() const {
  const double d = std::abs(mcwf - reference);
  if (std_error > 0.0) return d / std_error;
  return d == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

EvolutionRecord run_lossy(const ScenarioConfig& config, const ModelParams& params) {
  return run(config, params, config.grid(params.tau_off + kPi), options_for(config, params));
}

CavityPoint evaluate_cavity_point(const EvolutionRecord& r, double tau_off) {
  const Extremum a = find_extremum(r.times, r.column("fidelity_a"), ExtremumKind::Max, tau_off - kPi / 4,
                                   tau_off + kPi / 4);
  const Extremum c = find_extremum(r.times, r.column("fidelity_c"), ExtremumKind::Max, tau_off + kPi / 4,
                                   tau_off + 3 * kPi / 4);
  return {r.times[a.index], a.sample_value, r.column("E_a")[a.index],
          r.times[c.index], c.sample_value, r.column("E_c")[c.index]};
}

FiberPoint evaluate_fiber_point(const EvolutionRecord& r, double tau_off) {
  const Extremum pe = find_extremum(r.times, r.column("p_e"), ExtremumKind::Max, tau_off - kPi / 4, tau_off + kPi / 4);
  const Extremum nc = find_extremum(r.times, r.column("N_c"), ExtremumKind::Max, 0.0, tau_off);
  const Extremum a = find_extremum(r.times, r.column("fidelity_a"), ExtremumKind::Max, tau_off - kPi / 4,
                                   tau_off + kPi / 4);
  return {pe.sample_value, nc.sample_value, r.times[a.index], r.column("E_a")[a.index], a.sample_value};
}

SweepResult sweep_cavity_decay(const ScenarioConfig& config, std::span<const double> kappa_list,
                               std::span<const double> anchors) {
  config.validate();
  for (double k : kappa_list) {
    if (!(k > 0.0)) throw std::invalid_argument("sweep_cavity_decay: kappa_c must be > 0");
  }
  SweepResult out;
  out.table.columns = {"kappa_c", "tau_a", "F_a", "E_a", "tau_c", "F_c", "E_c"};
  std::vector<CavityPoint> points(kappa_list.size());
  std::vector<std::vector<std::string>> warnings(kappa_list.size());
  parallel_for(kappa_list.size(), config.evolution.n_workers, [&](std::size_t i) {
    ModelParams p = config.base;
    p.kappa_c = kappa_list[i];
    const EvolutionRecord r = run_lossy(config, p);
    points[i] = evaluate_cavity_point(r, p.tau_off);
    append_warnings(warnings[i], r.warnings, format_value("kappa_c", p.kappa_c));
  });
  for (std::size_t i = 0; i < points.size(); ++i) {
    const CavityPoint& c = points[i];
    out.table.rows.push_back({kappa_list[i], c.tau_a, c.fidelity_a, c.negativity_a, c.tau_c, c.fidelity_c,
                              c.negativity_c});
    out.warnings.insert(out.warnings.end(), warnings[i].begin(), warnings[i].end());
  }
  out.fits = fits_table();
  if (kappa_list.size() >= 3) add_fits(out.fits, "kappa_c", out.table, "kappa_c", {"F_a", "E_a", "F_c", "E_c"});

  for (double k : anchors) {
    ModelParams p = config.base;
    p.kappa_c = k;
    cross_check(config, p, k, [&](const EvolutionRecord& r) {
      const CavityPoint c = evaluate_cavity_point(r, p.tau_off);
      const std::size_t ia = sample_index(r, c.tau_a), ic = sample_index(r, c.tau_c);
      return std::vector<Probe>{{"F_a", "fidelity_a", ia}, {"E_a", "E_a", ia}, {"F_c", "fidelity_c", ic},
                                {"E_c", "E_c", ic}};
    }, out);
  }
  return out;
}

SweepResult sweep_fiber_decay(const ScenarioConfig& config, std::span<const double> kappa_f_list,
                              std::span<const double> anchors) {
  config.validate();
  for (double k : kappa_f_list) {
    if (!(k > 0.0)) throw std::invalid_argument("sweep_fiber_decay: kappa_f must be > 0");
  }
  SweepResult out;
  out.table.columns = {"kappa_f", "p_e", "N_c", "tau_a", "E_a", "F_a"};
  std::vector<FiberPoint> points(kappa_f_list.size());
  std::vector<std::vector<std::string>> warnings(kappa_f_list.size());
  parallel_for(kappa_f_list.size(), config.evolution.n_workers, [&](std::size_t i) {
    ModelParams p = config.base;
    p.kappa_f = kappa_f_list[i];
    const EvolutionRecord r = run_lossy(config, p);
    points[i] = evaluate_fiber_point(r, p.tau_off);
    append_warnings(warnings[i], r.warnings, format_value("kappa_f", p.kappa_f));
  });
  for (std::size_t i = 0; i < points.size(); ++i) {
    const FiberPoint& f = points[i];
    out.table.rows.push_back({kappa_f_list[i], f.pe, f.nc, f.tau_a, f.negativity_a, f.fidelity_a});
    out.warnings.insert(out.warnings.end(), warnings[i].begin(), warnings[i].end());
  }
  out.fits = fits_table();
  if (kappa_f_list.size() >= 3) add_fits(out.fits, "kappa_f", out.table, "kappa_f", {"p_e", "N_c", "E_a", "F_a"});

  for (double k : anchors) {
    ModelParams p = config.base;
    p.kappa_f = k;
    cross_check(config, p, k, [&](const EvolutionRecord& r) {
      const double lo = p.tau_off - kPi / 4, hi = p.tau_off + kPi / 4;
      const std::size_t ipe = find_extremum(r.times, r.column("p_e"), ExtremumKind::Max, lo, hi).index;
      const std::size_t inc = find_extremum(r.times, r.column("N_c"), ExtremumKind::Max, 0.0, p.tau_off).index;
      const std::size_t ia = sample_index(r, evaluate_fiber_point(r, p.tau_off).tau_a);
      return std::vector<Probe>{{"p_e", "p_e", ipe}, {"N_c", "N_c", inc}, {"E_a", "E_a", ia},
                                {"F_a", "fidelity_a", ia}};
    }, out);
  }
  return out;
}

MultimodeResult run_multimode(const ScenarioConfig& config, std::span<const double> nu_list, SwitchOffPolicy policy) {
  config.validate();
  for (double nu : nu_list) {
    if (!(nu >= 0.0)) throw std::invalid_argument("run_multimode: nu must be >= 0");
  }
  struct Point {
    SwitchOffChoice choice;
    std::array<double, 4> peaks{};
    std::vector<std::vector<Cell>> traces;
    std::vector<std::string> warnings;
  };
  std::vector<Point> points(nu_list.size());
  parallel_for(nu_list.size(), config.evolution.n_workers, [&](std::size_t i) {
    ModelParams p = ModelParams::multimode(nu_list[i]);
    p.g = config.base.g;
    p.cutoff = config.base.cutoff;
    p.kappa_c = config.base.kappa_c;
    p.kappa_f = config.base.kappa_f;
    p.gamma_a = config.base.gamma_a;
    p.nbar = config.base.nbar;
    p.tau_off = config.base.tau_off;
    Point& pt = points[i];
    pt.choice = choose_switch_off(p, config.initial, policy, config.dt, 2 * kPi);
    p.tau_off = pt.choice.tau_off;
    const TimeGrid grid = config.grid(p.tau_off + kPi);
    const EvolutionRecord r = run(config, p, grid, options_for(config, p));
    append_warnings(pt.warnings, r.warnings, format_value("nu", nu_list[i]));
    const char* cols[4] = {"E_a", "fidelity_a", "E_c", "fidelity_c"};
    for (int k = 0; k < 4; ++k) {
      const auto& v = r.column(cols[k]);
      double best = 0.0;
      for (std::size_t s = 0; s < r.size(); ++s) {
        if (r.times[s] >= p.tau_off) best = std::max(best, v[s]);
      }
      pt.peaks[k] = best;
    }
    for (std::size_t s = 0; s < r.size(); ++s) {
      pt.traces.push_back({nu_list[i], r.times[s], r.column("E_a")[s], r.column("E_c")[s], r.column("E_f")[s]});
    }
  });

  MultimodeResult out;
  out.table.columns = {"nu", "policy", "tau_off", "pe_max", "nf_min", "nc_max", "period_pe", "period_nc",
                       "E_a", "F_a", "E_c", "F_c"};
  out.traces.columns = {"nu", "tau", "E_a", "E_c", "E_f"};
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Point& pt = points[i];
    const SwitchOffChoice& c = pt.choice;
    out.table.rows.push_back({nu_list[i], std::string(to_string(policy)), c.tau_off, c.pe_max, c.nf_min, c.nc_max,
                              c.period_pe, c.period_nc, pt.peaks[0], pt.peaks[1], pt.peaks[2], pt.peaks[3]});
    for (const auto& row : pt.traces) out.traces.rows.push_back(row);
    out.warnings.insert(out.warnings.end(), pt.warnings.begin(), pt.warnings.end());
  }
  return out;
}

RobustnessResult robustness_tau_off(const ScenarioConfig& config, std::span<const double> delta_list) {
  config.validate();
  for (double d : delta_list) {
    if (!(std::abs(d) < 1.0)) throw std::invalid_argument("robustness_tau_off: |delta| must be < 1");
  }
  RobustnessResult out;
  out.table.columns = {"delta", "tau_off", "tau_peak", "fidelity"};
  std::vector<std::vector<Cell>> rows(delta_list.size());
  std::vector<std::vector<std::string>> warnings(delta_list.size());
  parallel_for(delta_list.size(), config.evolution.n_workers, [&](std::size_t i) {
    ModelParams p = config.base;
    p.tau_off = config.base.tau_off * (1.0 + delta_list[i]);
    const TimeGrid grid = config.grid(p.tau_off + kPi / 2);
    const EvolutionRecord r = run(config, p, grid, options_for(config, p));
    const auto& f = r.column("fidelity_a");
    const double lo = p.tau_off / 2, hi = p.tau_off + kPi / 2;
    const Extremum e = first_local_extremum(r.times, f, ExtremumKind::Max, lo, hi)
                           .value_or(find_extremum(r.times, f, ExtremumKind::Max, lo, hi));
    rows[i] = {delta_list[i], p.tau_off, r.times[e.index], e.sample_value};
    append_warnings(warnings[i], r.warnings, format_value("delta", delta_list[i]));
  });
  out.table.rows = std::move(rows);
  for (const auto& w : warnings) out.warnings.insert(out.warnings.end(), w.begin(), w.end());
  return out;
}

}  // namespace cqedmap
