#pragma once

#include <random>

#include "cqedmap/hilbert.hpp"

namespace testing {

inline cqedmap::Matrix random_matrix(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> d;
  cqedmap::Matrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = {d(rng), d(rng)};
  }
  return m;
}

inline cqedmap::Matrix random_hermitian(std::mt19937_64& rng, Eigen::Index n) {
  const cqedmap::Matrix m = random_matrix(rng, n);
  return 0.5 * (m + m.adjoint());
}

inline cqedmap::Matrix random_density(std::mt19937_64& rng, Eigen::Index n) {
  const cqedmap::Matrix m = random_matrix(rng, n);
  cqedmap::Matrix rho = m * m.adjoint();
  return rho / rho.trace().real();
}

// (1-p)|GHZ><GHZ| + p I/8
inline cqedmap::Matrix werner8(double p) {
  cqedmap::Matrix rho = (p / 8.0) * cqedmap::Matrix::Identity(8, 8);
  rho(0, 0) += 0.5 * (1 - p);
  rho(7, 7) += 0.5 * (1 - p);
  rho(0, 7) += 0.5 * (1 - p);
  rho(7, 0) += 0.5 * (1 - p);
  return rho;
}

inline cqedmap::HilbertSpace two_qubits() {
  return cqedmap::HilbertSpace({{cqedmap::atom(cqedmap::Site::A), 2}, {cqedmap::atom(cqedmap::Site::B), 2}});
}

}  // namespace testing
