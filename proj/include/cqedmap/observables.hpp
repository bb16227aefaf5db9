#pragma once

#include <array>
#include <utility>

#include "cqedmap/hilbert.hpp"

namespace cqedmap {

enum class SubsystemGroup { Atoms, Cavities, Fields };

inline constexpr std::array<SubsystemGroup, 3> kGroups{SubsystemGroup::Atoms, SubsystemGroup::Cavities,
                                                        SubsystemGroup::Fields};

/// 'a', 'c' or 'f'.
char group_tag(SubsystemGroup group);
std::array<SubsystemLabel, 3> group_labels(SubsystemGroup group);

/// The three-qubit space used for 8x8 reduced states (qubits A, B, C).
const HilbertSpace& three_qubit_space();

double mean_photon_number(const StateVector& psi, SubsystemLabel mode);
double mean_photon_number(const DensityMatrix& rho, SubsystemLabel mode);

double excitation_probability(const StateVector& psi, Site site);
double excitation_probability(const DensityMatrix& rho, Site site);
/// Average over the three atoms.
double excitation_probability(const StateVector& psi);
double excitation_probability(const DensityMatrix& rho);

/// Reduced state of a group, qubits ordered A, B, C. For cutoff > 1 the
/// bosonic groups return the block on levels {0, 1} (not renormalized).
Matrix reduced_state(const StateVector& psi, SubsystemGroup group);
Matrix reduced_state(const DensityMatrix& rho, SubsystemGroup group);

double purity(const Matrix& rho8);

/// <reference| rho8 |reference>; `reference` must be normalized.
double fidelity_to(const Matrix& rho8, const Vector& reference);

/// c0|000> + c1|111> as an 8-vector.
Vector schmidt_vector(Complex c0, Complex c1);

/// Diagonal unitary multiplying a basis state with k excited qubits by
/// exp(-i phi k).
Vector apply_local_phase(const Vector& state8, double phi);
Matrix apply_local_phase(const Matrix& rho8, double phi);

struct AlignedFidelity {
  double fidelity;
  /// Maximizing phase, reduced to (-pi/3, pi/3] (U_phi acts on c0|000> + c1|111>
  /// only through 3 phi mod 2 pi).
  double phi;
};

/// max over phi of <psi| U_phi^dagger rho8 U_phi |psi> with psi = c0|000> + c1|111>.
AlignedFidelity aligned_fidelity(const Matrix& rho8, Complex c0, Complex c1);

}  // namespace cqedmap
