#include "cqedmap/observables.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cqedmap {

namespace {

void require_rho8(const Matrix& m) {
  if (m.rows() != 8 || m.cols() != 8) {
    throw std::invalid_argument("expected an 8x8 three-qubit matrix");
  }
}

double expectation_diag(const StateVector& psi, SubsystemLabel label) {
  const std::size_t pos = psi.space.position(label);
  double sum = 0.0;
  for (std::size_t i = 0; i < psi.space.total_dim(); ++i) {
    const int n = psi.space.occupation(i, pos);
    if (n != 0) sum += n * std::norm(psi.amplitudes(static_cast<Eigen::Index>(i)));
  }
  return sum / psi.norm_squared();
}

double expectation_diag(const DensityMatrix& rho, SubsystemLabel label) {
  const std::size_t pos = rho.space.position(label);
  double sum = 0.0;
  for (std::size_t i = 0; i < rho.space.total_dim(); ++i) {
    const int n = rho.space.occupation(i, pos);
    const auto ii = static_cast<Eigen::Index>(i);
    if (n != 0) sum += n * rho.matrix(ii, ii).real();
  }
  return sum;
}

void require_bosonic(SubsystemLabel mode) {
  if (!mode.is_bosonic()) {
    throw std::invalid_argument("mean_photon_number: " + mode.name() + " is not a bosonic mode");
  }
}

Matrix qubit_block(const DensityMatrix& reduced) {
  const int d = reduced.space[0].dim;
  if (d == 2) return reduced.matrix;
  Matrix out(8, 8);
  for (int q = 0; q < 8; ++q) {
    const int iq = ((q >> 2) & 1) * d * d + ((q >> 1) & 1) * d + (q & 1);
    for (int r = 0; r < 8; ++r) {
      const int ir = ((r >> 2) & 1) * d * d + ((r >> 1) & 1) * d + (r & 1);
      out(q, r) = reduced.matrix(iq, ir);
    }
  }
  return out;
}

int excitations(int code) {
  return (code & 1) + ((code >> 1) & 1) + ((code >> 2) & 1);
}

}  // namespace

char group_tag(SubsystemGroup group) {
  switch (group) {
    case SubsystemGroup::Atoms: return 'a';
    case SubsystemGroup::Cavities: return 'c';
    case SubsystemGroup::Fields: return 'f';
  }
  return '?';
}

std::array<SubsystemLabel, 3> group_labels(SubsystemGroup group) {
  const SubsystemKind kind = group == SubsystemGroup::Atoms      ? SubsystemKind::Atom
                             : group == SubsystemGroup::Cavities ? SubsystemKind::Cavity
                                                                 : SubsystemKind::Field;
  return {SubsystemLabel{kind, Site::A}, SubsystemLabel{kind, Site::B}, SubsystemLabel{kind, Site::C}};
}

const HilbertSpace& three_qubit_space() {
  static const HilbertSpace space({{atom(Site::A), 2}, {atom(Site::B), 2}, {atom(Site::C), 2}});
  return space;
}

double mean_photon_number(const StateVector& psi, SubsystemLabel mode) {
  require_bosonic(mode);
  return expectation_diag(psi, mode);
}

double mean_photon_number(const DensityMatrix& rho, SubsystemLabel mode) {
  require_bosonic(mode);
  return expectation_diag(rho, mode);
}

double excitation_probability(const StateVector& psi, Site site) {
  return expectation_diag(psi, atom(site));
}

double excitation_probability(const DensityMatrix& rho, Site site) {
  return expectation_diag(rho, atom(site));
}

double excitation_probability(const StateVector& psi) {
  double sum = 0.0;
  for (Site s : kSites) sum += excitation_probability(psi, s);
  return sum / 3.0;
}

double excitation_probability(const DensityMatrix& rho) {
  double sum = 0.0;
  for (Site s : kSites) sum += excitation_probability(rho, s);
  return sum / 3.0;
}

Matrix reduced_state(const StateVector& psi, SubsystemGroup group) {
  const auto labels = group_labels(group);
  return qubit_block(partial_trace(psi, labels));
}

Matrix reduced_state(const DensityMatrix& rho, SubsystemGroup group) {
  const auto labels = group_labels(group);
  return qubit_block(partial_trace(rho, labels));
}

double purity(const Matrix& rho8) {
  // tr(rho^2) = sum |rho_ij|^2 for Hermitian rho
  return rho8.cwiseAbs2().sum();
}

double fidelity_to(const Matrix& rho8, const Vector& reference) {
  require_rho8(rho8);
  if (reference.size() != 8) {
    throw std::invalid_argument("fidelity_to: reference must be an 8-vector");
  }
  return std::real(reference.dot(rho8 * reference));
}

Vector schmidt_vector(Complex c0, Complex c1) {
  Vector v = Vector::Zero(8);
  v(0) = c0;
  v(7) = c1;
  return v;
}

Vector apply_local_phase(const Vector& state8, double phi) {
  if (state8.size() != 8) {
    throw std::invalid_argument("apply_local_phase: expected an 8-vector");
  }
  Vector out = state8;
  for (int q = 0; q < 8; ++q) out(q) *= std::polar(1.0, -phi * excitations(q));
  return out;
}

Matrix apply_local_phase(const Matrix& rho8, double phi) {
  require_rho8(rho8);
  Matrix out = rho8;
  for (int q = 0; q < 8; ++q) {
    for (int r = 0; r < 8; ++r) {
      out(q, r) *= std::polar(1.0, -phi * (excitations(q) - excitations(r)));
    }
  }
  return out;
}

AlignedFidelity aligned_fidelity(const Matrix& rho8, Complex c0, Complex c1) {
  require_rho8(rho8);
  // <psi_phi|rho|psi_phi> = |c0|^2 rho00 + |c1|^2 rho77 + 2 Re(conj(c0) c1 e^{-3i phi} rho07)
  const Complex cross = std::conj(c0) * c1 * rho8(0, 7);
  const double f = std::norm(c0) * rho8(0, 0).real() + std::norm(c1) * rho8(7, 7).real() + 2.0 * std::abs(cross);
  double phi = std::arg(cross) / 3.0;  // in (-pi/3, pi/3]
  if (std::abs(cross) == 0.0) phi = 0.0;
  return {f, phi};
}

}  // namespace cqedmap
