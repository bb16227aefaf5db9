#pragma once

#include <array>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "cqedmap/hilbert.hpp"

namespace cqedmap {

/// Switch-off time at which a single-mode chain has fully fed the atom.
inline constexpr double kMappingTime = std::numbers::pi / std::numbers::sqrt2;

/// Dimensionless parameters; couplings and rates are in units of g_A and
/// times in units of 1/g_A.
struct ModelParams {
  std::array<double, 3> g{1.0, 1.0, 1.0};
  /// nu[J][K] couples cavity J to field mode K while the drive is on.
  std::array<std::array<double, 3>, 3> nu{{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}};
  double kappa_c = 0.0;
  double kappa_f = 0.0;
  double gamma_a = 0.0;
  double nbar = 0.0;
  /// Step switch-off of every nu; +infinity keeps the drive on forever.
  double tau_off = kMappingTime;
  /// Fock truncation per bosonic mode (levels 0..cutoff).
  int cutoff = 1;

  static ModelParams single_mode() { return {}; }
  /// Diagonal nu stays 1, all six off-diagonal entries equal `offdiag`.
  static ModelParams multimode(double offdiag);

  bool dissipative() const { return kappa_c > 0.0 || kappa_f > 0.0 || gamma_a > 0.0; }
  bool drive_on(double tau) const { return tau < tau_off; }

  /// Throws std::invalid_argument on g_A != 1, negative or non-finite
  /// couplings/rates, tau_off <= 0, or cutoff < 1.
  void validate() const;
};

struct InitialStateSpec {
  /// c0 |000>_f + c1 |111>_f
  struct PureSchmidt {
    Complex c0;
    Complex c1;
  };
  /// (1 - p) |GHZ><GHZ| + (p / 8) I on the field modes.
  struct Werner {
    double p;
  };

  std::variant<PureSchmidt, Werner> variant = PureSchmidt{std::numbers::sqrt2 / 2, std::numbers::sqrt2 / 2};

  static InitialStateSpec ghz();
  static InitialStateSpec schmidt(Complex c0, Complex c1);
  static InitialStateSpec werner(double p);

  bool is_pure() const { return std::holds_alternative<PureSchmidt>(variant); }
  /// Schmidt amplitudes of the pure reference state (GHZ for Werner input).
  std::pair<Complex, Complex> reference() const;
  void validate() const;
};

enum class ChannelKind { AtomDecay, FiberLoss, CavityLoss, CavityGain };

struct JumpChannel {
  ChannelKind kind;
  Site site;
  /// Squared prefactor of the jump operator (gamma_a, kappa_f, kappa_c (nbar + 1), kappa_c nbar).
  double rate;
  Operator op;

  std::string name() const;
};

HilbertSpace build_space(const ModelParams& params);

Operator build_hamiltonian(const ModelParams& params, double tau);

/// Twelve channels, ordered by kind (atom, fiber, cavity loss, cavity gain)
/// then site. Zero-rate channels carry an empty operator.
std::vector<JumpChannel> build_jump_channels(const ModelParams& params);

/// Fiber losses act only while the drive is on; every channel needs rate > 0.
bool channel_active(const JumpChannel& channel, const ModelParams& params, double tau);

/// H(tau) - (i/2) sum C^dagger C over the channels active at tau.
Operator build_effective_hamiltonian(const ModelParams& params, double tau);

/// Sum of all mode and atom excitation numbers.
Operator total_excitation_operator(const HilbertSpace& space);

/// Per basis index: nonzero when a Hamiltonian or gain term could raise some
/// bosonic mode above the cutoff from that basis state.
std::vector<char> truncation_risk(const ModelParams& params, const HilbertSpace& space, bool drive_on);

struct SpectralComponent {
  double weight;
  StateVector state;
};

/// Initial state as a spectral ensemble: fields carry the requested state,
/// cavities are in vacuum and atoms in the ground state.
struct InitialState {
  HilbertSpace space;
  std::vector<SpectralComponent> components;

  bool is_pure() const { return components.size() == 1; }
  const StateVector& pure() const;
  /// Dense full-space density matrix; refuses spaces above 4096 states.
  DensityMatrix density_matrix() const;
};

/// Drops zero-weight components.
InitialState initial_state(const InitialStateSpec& spec, const HilbertSpace& space);

/// Eigenvectors of every Werner state, independent of p:
/// GHZ+, GHZ-, then the six remaining field basis states.
std::vector<StateVector> werner_eigenvectors(const HilbertSpace& space);
/// Weights matching werner_eigenvectors: 1 - 7p/8, then p/8 seven times.
std::array<double, 8> werner_weights(double p);

/// Field basis state |nA nB nC>_f with vacuum cavities and ground atoms.
StateVector field_basis_state(const HilbertSpace& space, int nA, int nB, int nC);

}  // namespace cqedmap
