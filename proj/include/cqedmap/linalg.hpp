#pragma once

#include <complex>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace cqedmap {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<Complex, Eigen::RowMajor>;

inline constexpr Complex kI{0.0, 1.0};

/// Largest elementwise |m - m^dagger|.
double hermiticity_defect(const Matrix& m);

/// Eigenvalues of a Hermitian matrix in ascending order.
///
/// Throws std::invalid_argument if `m` is not square or deviates from
/// Hermiticity by more than `tolerance` (max elementwise).
RealVector hermitian_eigenvalues(const Matrix& m, double tolerance = 1e-8);

/// Largest |entry| of a dense or sparse matrix.
double max_abs(const Matrix& m);
double max_abs(const SparseMatrix& m);

}  // namespace cqedmap
