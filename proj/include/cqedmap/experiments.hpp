#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cqedmap/entanglement.hpp"
#include "cqedmap/evolve.hpp"

namespace cqedmap {

enum class SwitchOffPolicy { FixedTime, MaxPe, MinNf, MaxNc };

std::string_view to_string(SwitchOffPolicy policy);
std::optional<SwitchOffPolicy> parse_switch_off_policy(std::string_view text);

struct ScenarioConfig {
  ModelParams base;
  InitialStateSpec initial;
  double dt = 1e-3;
  int sample_every = 10;
  /// Each driver picks its own horizon when unset.
  std::optional<double> t_end;
  EvolutionOptions evolution;
  SwitchOffPolicy switch_off_policy = SwitchOffPolicy::FixedTime;
  std::vector<double> p_list;
  std::vector<double> kappa_list;
  std::vector<double> nu_list;
  std::vector<double> delta_list;
  /// Sweep rates cross-checked with MCWF against the master equation.
  std::vector<double> anchor_list;

  TimeGrid grid(double default_end) const;
  void validate() const;
};

using Cell = std::variant<double, std::string>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  std::size_t column_index(std::string_view name) const;
  double number(std::size_t row, std::string_view column) const;
  const std::string& text(std::size_t row, std::string_view column) const;
};

enum class ExtremumKind { Max, Min };

struct Extremum {
  double tau = 0.0;
  /// Parabola vertex through the discrete extremum and its neighbours.
  double value = 0.0;
  std::size_t index = 0;
  double sample_value = 0.0;
  bool on_boundary = false;
};

/// Global extremum over samples with lo <= t <= hi.
Extremum find_extremum(std::span<const double> times, std::span<const double> values, ExtremumKind kind, double lo,
                       double hi);
/// First strict interior local extremum in [lo, hi]; nullopt if none.
std::optional<Extremum> first_local_extremum(std::span<const double> times, std::span<const double> values,
                                             ExtremumKind kind, double lo, double hi);
/// Linear interpolation, clamped to the sampled range.
double value_at(std::span<const double> times, std::span<const double> values, double tau);

struct FitResult {
  double amplitude = 0.0;
  double rate = 0.0;
  /// RMS of the residuals of ln y.
  double residual = 0.0;
};

/// Least squares of ln y = ln A - rate x.
FitResult fit_exponential(std::span<const double> xs, std::span<const double> ys);

/// Drive-on run without switch-off; the policy picks the first local
/// extremum of p_e, N_f or N_c.
struct SwitchOffChoice {
  double tau_off = 0.0;
  double pe_max = 0.0;
  double pe_max_time = 0.0;
  double nf_min = 0.0;
  double nc_max = 0.0;
  /// Twice the time of the first p_e maximum.
  double period_pe = 0.0;
  /// Twice the spacing from zero to the first interior N_c minimum.
  double period_nc = 0.0;
};

SwitchOffChoice choose_switch_off(const ModelParams& params, const InitialStateSpec& initial, SwitchOffPolicy policy,
                                  double dt, double horizon);

struct Fig1Result {
  EvolutionRecord series;
  /// kind, index, tau_expected, tau, fidelity, negativity, purity, phase, boundary
  Table peaks;
  double tau_off = 0.0;
};

Fig1Result run_fig1(const ScenarioConfig& config);

/// Reduced (a, c, f) states of the eight Werner spectral components on a
/// common time grid; any Werner mixture is a weighted sum of them.
struct WernerComponents {
  std::vector<double> times;
  std::vector<std::array<std::array<Matrix, 3>, 8>> states;
  std::vector<std::string> warnings;

  std::array<Matrix, 3> mix(std::size_t sample, double p) const;
};

WernerComponents werner_components(const ModelParams& params, const TimeGrid& grid);

struct WernerResult {
  /// tau, p, label_a, label_c, label_f, E_a, E_c, E_f, w_ghz_a, w_bisep_a
  Table map;
  /// tau, p, E_a, E_c, E_f
  Table sections;
  /// p, group, kind, tau
  Table events;
  std::size_t declined = 0;
  std::vector<std::string> warnings;
};

WernerResult run_werner_plane(const ScenarioConfig& config, std::span<const double> p_grid,
                              std::span<const double> section_ps);

/// Noise levels where the atomic label of the mixed state at `sample` first
/// leaves GHZclass, Wclass and INS.
std::array<double, 3> werner_class_boundaries(const WernerComponents& components, std::size_t sample,
                                              double tol = 1e-6);

struct CrossCheck {
  double rate = 0.0;
  std::string quantity;
  double tau = 0.0;
  double reference = 0.0;
  double mcwf = 0.0;
  double std_error = 0.0;

  double z() const;
};

struct SweepResult {
  Table table;
  /// sweep, quantity, amplitude, rate, residual
  Table fits;
  std::vector<CrossCheck> cross_checks;
  std::vector<std::string> warnings;
};

struct CavityPoint {
  double tau_a = 0.0;
  double fidelity_a = 0.0;
  double negativity_a = 0.0;
  double tau_c = 0.0;
  double fidelity_c = 0.0;
  double negativity_c = 0.0;
};

/// First atomic and cavity peaks of one lossy run.
CavityPoint evaluate_cavity_point(const EvolutionRecord& record, double tau_off);

struct FiberPoint {
  double pe = 0.0;
  double nc = 0.0;
  double tau_a = 0.0;
  double negativity_a = 0.0;
  double fidelity_a = 0.0;
};

FiberPoint evaluate_fiber_point(const EvolutionRecord& record, double tau_off);

/// Lossy run with config.evolution; horizon defaults to tau_off + pi.
EvolutionRecord run_lossy(const ScenarioConfig& config, const ModelParams& params);

/// MCWF cross-checks at `anchors` use config.evolution with method MCWF.
SweepResult sweep_cavity_decay(const ScenarioConfig& config, std::span<const double> kappa_list,
                               std::span<const double> anchors);
SweepResult sweep_fiber_decay(const ScenarioConfig& config, std::span<const double> kappa_f_list,
                              std::span<const double> anchors);

struct MultimodeResult {
  /// nu, policy, tau_off, pe_max, nf_min, nc_max, period_pe, period_nc,
  /// E_a, F_a, E_c, F_c
  Table table;
  /// nu, tau, E_a, E_c, E_f
  Table traces;
  std::vector<std::string> warnings;
};

MultimodeResult run_multimode(const ScenarioConfig& config, std::span<const double> nu_list, SwitchOffPolicy policy);

struct RobustnessResult {
  /// delta, tau_off, tau_peak, fidelity
  Table table;
  std::vector<std::string> warnings;
};

RobustnessResult robustness_tau_off(const ScenarioConfig& config, std::span<const double> delta_list);

}  // namespace cqedmap
