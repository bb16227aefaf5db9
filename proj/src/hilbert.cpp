#include "cqedmap/hilbert.hpp"

#include <algorithm>
#include <stdexcept>

namespace cqedmap {

namespace {

struct SplitIndex {
  std::vector<std::size_t> kept;  // index within the kept space, per full index
  std::vector<std::size_t> rest;  // index within the complement, per full index
  std::size_t kept_dim = 1;
  std::size_t rest_dim = 1;
};

std::vector<bool> membership(const HilbertSpace& space, std::span<const SubsystemLabel> labels) {
  std::vector<bool> member(space.size(), false);
  for (const auto& label : labels) {
    const std::size_t pos = space.position(label);
    if (member[pos]) {
      throw std::invalid_argument("duplicate subsystem label " + label.name());
    }
    member[pos] = true;
  }
  return member;
}

SplitIndex split(const HilbertSpace& space, const std::vector<bool>& member) {
  SplitIndex s;
  const std::size_t n = space.total_dim();
  s.kept.assign(n, 0);
  s.rest.assign(n, 0);
  for (std::size_t pos = 0; pos < space.size(); ++pos) {
    (member[pos] ? s.kept_dim : s.rest_dim) *= static_cast<std::size_t>(space[pos].dim);
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t k = 0;
    std::size_t r = 0;
    for (std::size_t pos = 0; pos < space.size(); ++pos) {
      const auto d = static_cast<std::size_t>(space[pos].dim);
      const auto occ = static_cast<std::size_t>(space.occupation(i, pos));
      if (member[pos]) {
        k = k * d + occ;
      } else {
        r = r * d + occ;
      }
    }
    s.kept[i] = k;
    s.rest[i] = r;
  }
  return s;
}

}  // namespace

std::string SubsystemLabel::name() const {
  std::string out;
  switch (kind) {
    case SubsystemKind::Field: out = "f_"; break;
    case SubsystemKind::Cavity: out = "c_"; break;
    case SubsystemKind::Atom: out = "a_"; break;
  }
  out += static_cast<char>('A' + site_index(site));
  return out;
}

int site_index(Site s) {
  return static_cast<int>(s);
}

HilbertSpace::HilbertSpace(std::vector<Subsystem> subsystems) : subsystems_(std::move(subsystems)) {
  if (subsystems_.empty()) {
    throw std::invalid_argument("HilbertSpace: no subsystems");
  }
  for (std::size_t i = 0; i < subsystems_.size(); ++i) {
    const auto& s = subsystems_[i];
    if (s.label.kind == SubsystemKind::Atom && s.dim != 2) {
      throw std::invalid_argument("HilbertSpace: atom " + s.label.name() + " must have dimension 2");
    }
    if (s.label.is_bosonic() && s.dim < 2) {
      throw std::invalid_argument("HilbertSpace: mode " + s.label.name() + " needs dimension >= 2");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (subsystems_[j].label == s.label) {
        throw std::invalid_argument("HilbertSpace: duplicate label " + s.label.name());
      }
    }
  }
  strides_.assign(subsystems_.size(), 1);
  total_dim_ = 1;
  for (std::size_t pos = subsystems_.size(); pos-- > 0;) {
    strides_[pos] = total_dim_;
    total_dim_ *= static_cast<std::size_t>(subsystems_[pos].dim);
  }
}

bool HilbertSpace::contains(SubsystemLabel label) const {
  return std::any_of(subsystems_.begin(), subsystems_.end(),
                     [&](const Subsystem& s) { return s.label == label; });
}

std::size_t HilbertSpace::position(SubsystemLabel label) const {
  for (std::size_t pos = 0; pos < subsystems_.size(); ++pos) {
    if (subsystems_[pos].label == label) return pos;
  }
  throw std::invalid_argument("HilbertSpace: no subsystem " + label.name());
}

std::vector<int> HilbertSpace::occupations(std::size_t index) const {
  std::vector<int> occ(subsystems_.size());
  for (std::size_t pos = 0; pos < subsystems_.size(); ++pos) {
    occ[pos] = occupation(index, pos);
  }
  return occ;
}

std::size_t HilbertSpace::index(std::span<const int> occupations) const {
  if (occupations.size() != subsystems_.size()) {
    throw std::invalid_argument("HilbertSpace::index: wrong tuple length");
  }
  std::size_t idx = 0;
  for (std::size_t pos = 0; pos < subsystems_.size(); ++pos) {
    if (occupations[pos] < 0 || occupations[pos] >= subsystems_[pos].dim) {
      throw std::invalid_argument("HilbertSpace::index: occupation out of range for " +
                                  subsystems_[pos].label.name());
    }
    idx += static_cast<std::size_t>(occupations[pos]) * strides_[pos];
  }
  return idx;
}

HilbertSpace HilbertSpace::restricted_to(std::span<const SubsystemLabel> keep) const {
  const auto member = membership(*this, keep);
  std::vector<Subsystem> kept;
  for (std::size_t pos = 0; pos < subsystems_.size(); ++pos) {
    if (member[pos]) kept.push_back(subsystems_[pos]);
  }
  return HilbertSpace(std::move(kept));
}

DensityDiagnostics diagnose(const DensityMatrix& rho) {
  DensityDiagnostics d;
  d.hermiticity = hermiticity_defect(rho.matrix);
  d.trace_error = std::abs(rho.matrix.trace() - Complex(1.0, 0.0));
  const Matrix h = 0.5 * (rho.matrix + rho.matrix.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(h, Eigen::EigenvaluesOnly);
  d.min_eigenvalue = solver.eigenvalues().minCoeff();
  return d;
}

void validate(const DensityMatrix& rho) {
  if (static_cast<std::size_t>(rho.matrix.rows()) != rho.space.total_dim() ||
      rho.matrix.rows() != rho.matrix.cols()) {
    throw std::invalid_argument("density matrix dimension does not match its space");
  }
  const auto d = diagnose(rho);
  if (!d.within(1e-10, 1e-8, 1e-8)) {
    throw std::invalid_argument("invalid density matrix: hermiticity " + std::to_string(d.hermiticity) +
                                ", trace error " + std::to_string(d.trace_error) +
                                ", min eigenvalue " + std::to_string(d.min_eigenvalue));
  }
}

namespace local {

Matrix identity(int dim) {
  return Matrix::Identity(dim, dim);
}

Matrix annihilation(int dim) {
  Matrix a = Matrix::Zero(dim, dim);
  for (int n = 1; n < dim; ++n) {
    a(n - 1, n) = std::sqrt(static_cast<double>(n));
  }
  return a;
}

Matrix number(int dim) {
  Matrix n = Matrix::Zero(dim, dim);
  for (int k = 0; k < dim; ++k) n(k, k) = static_cast<double>(k);
  return n;
}

Matrix sigma_minus() {
  Matrix s = Matrix::Zero(2, 2);
  s(0, 1) = 1.0;
  return s;
}

}  // namespace local

Operator embed_local(const HilbertSpace& space, SubsystemLabel label, const Matrix& local) {
  const std::size_t pos = space.position(label);
  const int d = space[pos].dim;
  if (local.rows() != d || local.cols() != d) {
    throw std::invalid_argument("embed_local: local operator on " + label.name() + " must be " +
                                std::to_string(d) + "x" + std::to_string(d));
  }
  const std::size_t n = space.total_dim();
  const std::size_t stride = space.stride(pos);
  std::vector<Eigen::Triplet<Complex>> triplets;
  triplets.reserve(n * static_cast<std::size_t>(d));
  for (std::size_t col = 0; col < n; ++col) {
    const int occ = space.occupation(col, pos);
    const std::size_t base = col - static_cast<std::size_t>(occ) * stride;
    for (int m = 0; m < d; ++m) {
      const Complex v = local(m, occ);
      if (v != Complex(0.0, 0.0)) {
        triplets.emplace_back(static_cast<int>(base + static_cast<std::size_t>(m) * stride),
                              static_cast<int>(col), v);
      }
    }
  }
  SparseMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  m.setFromTriplets(triplets.begin(), triplets.end());
  return Operator{space, std::move(m)};
}

DensityMatrix projector(const StateVector& psi) {
  return DensityMatrix{psi.space, psi.amplitudes * psi.amplitudes.adjoint()};
}

DensityMatrix partial_trace(const DensityMatrix& rho, std::span<const SubsystemLabel> keep) {
  if (keep.empty()) {
    throw std::invalid_argument("partial_trace: empty keep set");
  }
  const auto member = membership(rho.space, keep);
  const auto s = split(rho.space, member);

  std::vector<std::vector<std::size_t>> by_rest(s.rest_dim);
  for (std::size_t i = 0; i < rho.space.total_dim(); ++i) by_rest[s.rest[i]].push_back(i);

  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(s.kept_dim), static_cast<Eigen::Index>(s.kept_dim));
  for (const auto& group : by_rest) {
    for (std::size_t i : group) {
      for (std::size_t j : group) {
        out(static_cast<Eigen::Index>(s.kept[i]), static_cast<Eigen::Index>(s.kept[j])) +=
            rho.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      }
    }
  }
  return DensityMatrix{rho.space.restricted_to(keep), std::move(out)};
}

DensityMatrix partial_trace(const StateVector& psi, std::span<const SubsystemLabel> keep) {
  if (keep.empty()) {
    throw std::invalid_argument("partial_trace: empty keep set");
  }
  const double norm2 = psi.norm_squared();
  if (!(norm2 > 0.0)) {
    throw std::invalid_argument("partial_trace: zero state vector");
  }
  const auto member = membership(psi.space, keep);
  const auto s = split(psi.space, member);

  // Column r of `amps` holds the kept-space amplitudes for complement basis state r.
  Matrix amps = Matrix::Zero(static_cast<Eigen::Index>(s.kept_dim), static_cast<Eigen::Index>(s.rest_dim));
  for (std::size_t i = 0; i < psi.space.total_dim(); ++i) {
    amps(static_cast<Eigen::Index>(s.kept[i]), static_cast<Eigen::Index>(s.rest[i])) =
        psi.amplitudes(static_cast<Eigen::Index>(i));
  }
  Matrix out = amps * amps.adjoint() / norm2;
  return DensityMatrix{psi.space.restricted_to(keep), std::move(out)};
}

Matrix partial_transpose(const DensityMatrix& rho, std::span<const SubsystemLabel> subset) {
  if (subset.empty() || subset.size() >= rho.space.size()) {
    throw std::invalid_argument("partial_transpose: subset must be a proper nonempty subset");
  }
  const auto member = membership(rho.space, subset);
  const std::size_t n = rho.space.total_dim();
  // Subset digits of index i, as an offset that can be removed and re-added.
  std::vector<std::size_t> subset_part(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t pos = 0; pos < rho.space.size(); ++pos) {
      if (member[pos]) {
        subset_part[i] += static_cast<std::size_t>(rho.space.occupation(i, pos)) * rho.space.stride(pos);
      }
    }
  }
  Matrix out(rho.matrix.rows(), rho.matrix.cols());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t ti = i - subset_part[i] + subset_part[j];
      const std::size_t tj = j - subset_part[j] + subset_part[i];
      out(static_cast<Eigen::Index>(ti), static_cast<Eigen::Index>(tj)) =
          rho.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }
  return out;
}

}  // namespace cqedmap
