#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cqedmap/linalg.hpp"

namespace cqedmap {

enum class SubsystemKind { Field, Cavity, Atom };
enum class Site { A, B, C };

inline constexpr std::array<Site, 3> kSites{Site::A, Site::B, Site::C};

struct SubsystemLabel {
  SubsystemKind kind;
  Site site;

  friend bool operator==(const SubsystemLabel&, const SubsystemLabel&) = default;

  bool is_bosonic() const { return kind != SubsystemKind::Atom; }
  /// "f_A", "c_B", "a_C".
  std::string name() const;
};

inline SubsystemLabel field(Site s) { return {SubsystemKind::Field, s}; }
inline SubsystemLabel cavity(Site s) { return {SubsystemKind::Cavity, s}; }
inline SubsystemLabel atom(Site s) { return {SubsystemKind::Atom, s}; }

int site_index(Site s);

struct Subsystem {
  SubsystemLabel label;
  int dim;

  friend bool operator==(const Subsystem&, const Subsystem&) = default;
};

/// Ordered tensor product of labeled subsystems with row-major basis indexing
/// (the last declared subsystem varies fastest).
class HilbertSpace {
 public:
  HilbertSpace() = default;
  explicit HilbertSpace(std::vector<Subsystem> subsystems);

  std::size_t size() const { return subsystems_.size(); }
  const Subsystem& operator[](std::size_t pos) const { return subsystems_[pos]; }
  const std::vector<Subsystem>& subsystems() const { return subsystems_; }

  bool contains(SubsystemLabel label) const;
  /// Position of `label` in the declared order; throws if absent.
  std::size_t position(SubsystemLabel label) const;
  int dim(SubsystemLabel label) const { return subsystems_[position(label)].dim; }

  std::size_t total_dim() const { return total_dim_; }
  std::size_t stride(std::size_t pos) const { return strides_[pos]; }

  /// Per-subsystem occupation tuple of a basis index.
  std::vector<int> occupations(std::size_t index) const;
  int occupation(std::size_t index, std::size_t pos) const {
    return static_cast<int>((index / strides_[pos]) % static_cast<std::size_t>(subsystems_[pos].dim));
  }
  std::size_t index(std::span<const int> occupations) const;

  /// The space spanned by `keep`, in this space's declared order.
  HilbertSpace restricted_to(std::span<const SubsystemLabel> keep) const;

  friend bool operator==(const HilbertSpace& a, const HilbertSpace& b) {
    return a.subsystems_ == b.subsystems_;
  }

 private:
  std::vector<Subsystem> subsystems_;
  std::vector<std::size_t> strides_;
  std::size_t total_dim_ = 1;
};

struct Operator {
  HilbertSpace space;
  SparseMatrix matrix;

  Matrix dense() const { return Matrix(matrix); }
};

struct StateVector {
  HilbertSpace space;
  Vector amplitudes;

  double norm_squared() const { return amplitudes.squaredNorm(); }
};

struct DensityMatrix {
  HilbertSpace space;
  Matrix matrix;
};

struct DensityDiagnostics {
  double hermiticity = 0.0;    // max |rho - rho^dagger|
  double trace_error = 0.0;    // |tr rho - 1|
  double min_eigenvalue = 0.0;

  bool within(double herm_tol, double trace_tol, double eig_tol) const {
    return hermiticity <= herm_tol && trace_error <= trace_tol && min_eigenvalue >= -eig_tol;
  }
};

DensityDiagnostics diagnose(const DensityMatrix& rho);

/// Throws std::invalid_argument unless Hermitian within 1e-10, trace 1 within
/// 1e-8 and minimum eigenvalue >= -1e-8.
void validate(const DensityMatrix& rho);

/// Single-mode building blocks in the Fock / {g, e} basis.
namespace local {
Matrix identity(int dim);
/// Truncated annihilation operator on levels 0..dim-1.
Matrix annihilation(int dim);
Matrix number(int dim);
/// Atomic lowering operator |g><e| with |g> = 0, |e> = 1.
Matrix sigma_minus();
}  // namespace local

/// identity x ... x local x ... x identity in the space's declared order.
Operator embed_local(const HilbertSpace& space, SubsystemLabel label, const Matrix& local);

DensityMatrix projector(const StateVector& psi);

/// Reduced state on `keep` (declared order preserved).
DensityMatrix partial_trace(const DensityMatrix& rho, std::span<const SubsystemLabel> keep);
/// Reduced state of |psi><psi| / <psi|psi>.
DensityMatrix partial_trace(const StateVector& psi, std::span<const SubsystemLabel> keep);

/// Transposes the indices of the `subset` subsystems only.
Matrix partial_transpose(const DensityMatrix& rho, std::span<const SubsystemLabel> subset);

}  // namespace cqedmap
