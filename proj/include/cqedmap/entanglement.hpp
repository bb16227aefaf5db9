#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cqedmap/linalg.hpp"
#include "cqedmap/observables.hpp"

namespace cqedmap {

enum class Cut { A_BC, B_AC, C_AB };

enum class ClassLabel { GHZclass, Wclass, INS, FullySeparable };

std::string_view to_string(ClassLabel label);
std::optional<ClassLabel> parse_class_label(std::string_view text);

/// ||rho^{T_cut}||_1 - 1, so that GHZ gives 1.
double bipartite_negativity(const Matrix& rho8, Cut cut);

/// Geometric mean of the three bipartite negativities.
double tripartite_negativity(const Matrix& rho8);

struct WitnessReport {
  double w_ghz;
  double w_bisep;
  double phase_used;
};

/// Projector witnesses 3/4 - P and 1/2 - P, with P the GHZ projector rotated
/// by the local phase that maximizes its overlap with rho8.
WitnessReport witness_values(const Matrix& rho8);

struct StructureCheck {
  bool ok;
  /// Largest |rho_ij| outside the diagonal and the (0,7) pair.
  double stray_coherence;
  /// Largest spread of the diagonal within each excitation sector.
  double diagonal_asymmetry;
  std::string diagnostic;
};

/// One coherence (0,7) and a permutation-symmetric diagonal, within `tol`.
StructureCheck check_structure(const Matrix& rho8, double tol = 1e-8);

/// Smallest eigenvalue of the partial transpose over each cut, from the 2x2
/// blocks of the one-coherence family.
std::array<double, 3> ppt_min_eigenvalues(const Matrix& rho8);

/// PPT under all three cuts. Throws std::domain_error when the structure
/// check fails.
bool full_separability_test(const Matrix& rho8, double eps_e = 1e-9);

struct ClassifyOptions {
  double eps_w = 1e-9;
  double eps_e = 1e-9;
  double structure_tol = 1e-8;
};

struct Classification {
  /// Empty when the state lies outside the one-coherence symmetric family.
  std::optional<ClassLabel> label;
  std::string diagnostic;
  double negativity;
  WitnessReport witness;
};

Classification classify(const Matrix& rho8, const ClassifyOptions& options = {});

enum class EsdKind { Death, Birth };

struct EsdEvent {
  EsdKind kind;
  SubsystemGroup subsystem;
  double time;
};

std::string_view to_string(EsdKind kind);

/// Death when E drops from > eps to <= eps, Birth on the reverse; crossing
/// times by linear interpolation.
std::vector<EsdEvent> detect_esd_esb(std::span<const double> times, std::span<const double> values,
                                     SubsystemGroup subsystem, double eps);

}  // namespace cqedmap
