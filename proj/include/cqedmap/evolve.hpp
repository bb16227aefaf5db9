#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cqedmap/model.hpp"
#include "cqedmap/observables.hpp"

namespace cqedmap {

struct TimeGrid {
  double t_start = 0.0;
  double t_end = 1.0;
  double dt = 1e-3;
  /// Observables are sampled every `sample_every` steps, at t_start, at the
  /// switch-off time and at t_end.
  int sample_every = 10;

  void validate() const;
};

enum class Method { Schrodinger, MasterEquation, MCWF };

std::string_view to_string(Method method);
std::optional<Method> parse_method(std::string_view text);

struct EvolutionOptions {
  Method method = Method::MasterEquation;
  int n_trajectories = 5000;
  std::uint64_t seed = 1;
  /// 0 picks std::thread::hardware_concurrency().
  int n_workers = 0;
  /// MCWF trajectories are reduced in this many fixed batches; standard
  /// errors come from a jackknife over the batches.
  int n_batches = 20;
  /// Evolve in the reachable basis subset instead of the full space.
  bool reduce_basis = true;
  bool keep_reduced_states = false;
  /// Schmidt amplitudes of the fidelity reference.
  std::pair<Complex, Complex> reference{std::numbers::sqrt2 / 2, std::numbers::sqrt2 / 2};

  void validate() const;
};

struct EvolutionDiagnostics {
  std::size_t basis_size = 0;
  double max_trace_error = 0.0;
  double max_hermiticity = 0.0;
  double min_eigenvalue = 0.0;
  double max_norm_drift = 0.0;
  /// Largest population on basis states that could leave the truncated space.
  double max_truncation_risk = 0.0;
  std::size_t jumps = 0;
  std::vector<std::string> channel_names;
  std::vector<std::size_t> channel_jumps;
};

/// Column names sampled by every evolution, in record order.
const std::vector<std::string>& sample_column_names();

struct EvolutionRecord {
  std::vector<double> times;
  std::vector<std::string> names;
  /// values[column][sample]
  std::vector<std::vector<double>> values;
  /// Same shape as `values` for MCWF, empty otherwise.
  std::vector<std::vector<double>> std_errors;
  /// Optional (a, c, f) reduced states per sample.
  std::vector<std::array<Matrix, 3>> reduced_states;
  std::vector<std::string> warnings;
  EvolutionDiagnostics diagnostics;

  std::size_t size() const { return times.size(); }
  bool has_column(std::string_view name) const;
  std::size_t column_index(std::string_view name) const;
  const std::vector<double>& column(std::string_view name) const;
  const std::vector<double>& std_error(std::string_view name) const;
};

/// Sorted set of basis indices with maps to and from the full space.
class BasisSubset {
 public:
  BasisSubset() = default;

  static BasisSubset full(std::size_t dim);
  /// Smallest subset containing `seeds` and closed under every operator.
  static BasisSubset closure(std::size_t dim, std::span<const std::size_t> seeds,
                             std::span<const SparseMatrix> operators);

  std::size_t size() const { return indices_.size(); }
  std::size_t full_dim() const { return full_dim_; }
  std::size_t full_index(std::size_t local) const { return indices_[local]; }
  /// -1 when the full index lies outside the subset.
  std::ptrdiff_t local_index(std::size_t full) const { return local_[full]; }
  const std::vector<std::size_t>& indices() const { return indices_; }

  SparseMatrix restrict(const SparseMatrix& op) const;
  Vector restrict(const Vector& v) const;
  Matrix restrict(const Matrix& m) const;
  Vector lift(const Vector& v) const;
  Matrix lift(const Matrix& m) const;

 private:
  std::size_t full_dim_ = 0;
  std::vector<std::size_t> indices_;
  std::vector<std::ptrdiff_t> local_;
};

/// Generator of one piecewise-constant segment, in subset coordinates.
struct Generator {
  bool drive_on = true;
  SparseMatrix h;
  SparseMatrix heff;
  std::vector<SparseMatrix> jumps;
  std::vector<SparseMatrix> jumps_dagger;
  /// Index of each active jump into build_jump_channels order.
  std::vector<std::size_t> channel_index;
  std::vector<double> risk;
};

class Dynamics {
 public:
  /// `support` lists full-space indices carrying the initial state.
  Dynamics(const ModelParams& params, std::span<const std::size_t> support, bool reduce);

  const ModelParams& params() const { return params_; }
  const HilbertSpace& space() const { return space_; }
  const BasisSubset& basis() const { return basis_; }
  const Generator& segment(bool drive_on) const { return drive_on ? before_ : after_; }
  const std::vector<std::string>& channel_names() const { return channel_names_; }

 private:
  ModelParams params_;
  HilbertSpace space_;
  BasisSubset basis_;
  Generator before_;
  Generator after_;
  std::vector<std::string> channel_names_;
};

/// d rho / d tau on the full space.
Matrix lindblad_rhs(const ModelParams& params, const DensityMatrix& rho, double tau);

EvolutionRecord evolve_schrodinger(const ModelParams& params, const StateVector& psi0, const TimeGrid& grid,
                                   const EvolutionOptions& options = {});
/// Evolves each spectral component and recombines by linearity.
EvolutionRecord evolve_schrodinger(const ModelParams& params, const InitialState& initial, const TimeGrid& grid,
                                   const EvolutionOptions& options = {});

EvolutionRecord evolve_master(const ModelParams& params, const DensityMatrix& rho0, const TimeGrid& grid,
                              const EvolutionOptions& options = {});
EvolutionRecord evolve_master(const ModelParams& params, const InitialState& initial, const TimeGrid& grid,
                              const EvolutionOptions& options = {});

EvolutionRecord evolve_mcwf(const ModelParams& params, const StateVector& psi0, const TimeGrid& grid,
                            const EvolutionOptions& options = {});
EvolutionRecord evolve_mcwf(const ModelParams& params, const InitialState& initial, const TimeGrid& grid,
                            const EvolutionOptions& options = {});

/// Dispatches on options.method.
EvolutionRecord evolve(const ModelParams& params, const InitialState& initial, const TimeGrid& grid,
                       const EvolutionOptions& options = {});

/// splitmix64 finalizer, used to derive per-trajectory seeds.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t trajectory_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace cqedmap
