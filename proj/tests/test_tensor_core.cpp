#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <numbers>

#include "cqedmap/hilbert.hpp"
#include "cqedmap/model.hpp"
#include "cqedmap/observables.hpp"
#include "support.hpp"

using namespace cqedmap;

namespace {

DensityMatrix bell() {
  const HilbertSpace space = testing::two_qubits();
  Vector v = Vector::Zero(4);
  v(0) = v(3) = std::numbers::sqrt2 / 2;
  return DensityMatrix{space, v * v.adjoint()};
}

}  // namespace

TEST_CASE("hilbert space layout") {
  const HilbertSpace s = build_space(ModelParams{});
  CHECK(s.size() == 9);
  CHECK(s.total_dim() == 512);
  CHECK(s[0].label == field(Site::A));
  CHECK(s[3].label == cavity(Site::A));
  CHECK(s[8].label == atom(Site::C));
  CHECK(s.stride(8) == 1);
  CHECK(s.stride(0) == 256);

  for (std::size_t i = 0; i < s.total_dim(); i += 37) {
    const auto occ = s.occupations(i);
    CHECK(s.index(occ) == i);
  }

  CHECK_THROWS_AS(HilbertSpace({{atom(Site::A), 3}}), std::invalid_argument);
  CHECK_THROWS_AS(HilbertSpace({{cavity(Site::A), 1}}), std::invalid_argument);
  CHECK_THROWS_AS(HilbertSpace({{cavity(Site::A), 2}, {cavity(Site::A), 2}}), std::invalid_argument);
  CHECK_THROWS_AS(HilbertSpace(std::vector<Subsystem>{}), std::invalid_argument);
}

TEST_CASE("embed_local") {
  const HilbertSpace s = build_space(ModelParams{});
  const Operator id = embed_local(s, atom(Site::B), local::identity(2));
  CHECK(max_abs(Matrix(id.dense() - Matrix::Identity(512, 512))) == 0.0);

  std::vector<int> occ(9, 0);
  occ[s.position(cavity(Site::A))] = 1;
  const auto i = static_cast<Eigen::Index>(s.index(occ));
  const Operator n = embed_local(s, cavity(Site::A), local::number(2));
  Vector e = Vector::Zero(512);
  e(i) = 1.0;
  CHECK(max_abs(Matrix(n.matrix * e - e)) < 1e-15);

  const SparseMatrix sa = embed_local(s, atom(Site::A), local::sigma_minus()).matrix;
  const SparseMatrix sb = embed_local(s, atom(Site::B), local::sigma_minus().adjoint()).matrix;
  CHECK(max_abs(SparseMatrix(sa * sb - sb * sa)) == 0.0);

  CHECK_THROWS_AS(embed_local(s, atom(Site::A), local::identity(3)), std::invalid_argument);

  SUBCASE("linearity") {
    std::mt19937_64 rng(7);
    const Matrix x = testing::random_matrix(rng, 2);
    const Matrix y = testing::random_matrix(rng, 2);
    const Complex a{0.3, -1.2};
    const Complex b{2.0, 0.5};
    const SparseMatrix lhs = embed_local(s, cavity(Site::C), a * x + b * y).matrix;
    const SparseMatrix rhs = a * embed_local(s, cavity(Site::C), x).matrix + b * embed_local(s, cavity(Site::C), y).matrix;
    CHECK(max_abs(SparseMatrix(lhs - rhs)) < 1e-12);
  }
}

TEST_CASE("partial_trace") {
  const DensityMatrix b = bell();
  const std::array keep{atom(Site::A)};
  const DensityMatrix r = partial_trace(b, keep);
  CHECK(r.matrix.rows() == 2);
  CHECK(std::abs(r.matrix(0, 0) - 0.5) < 1e-15);
  CHECK(std::abs(r.matrix(1, 1) - 0.5) < 1e-15);
  CHECK(std::abs(r.matrix(0, 1)) < 1e-15);

  const std::array all{atom(Site::A), atom(Site::B)};
  CHECK(max_abs(Matrix(partial_trace(b, all).matrix - b.matrix)) == 0.0);

  CHECK_THROWS_AS(partial_trace(b, std::span<const SubsystemLabel>{}), std::invalid_argument);

  SUBCASE("product state factorizes") {
    std::mt19937_64 rng(11);
    const Matrix r1 = testing::random_density(rng, 2);
    const Matrix r2 = testing::random_density(rng, 2);
    Matrix prod(4, 4);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k)
          for (int l = 0; l < 2; ++l) prod(2 * i + k, 2 * j + l) = r1(i, j) * r2(k, l);
    const DensityMatrix rho{testing::two_qubits(), prod};
    CHECK(max_abs(Matrix(partial_trace(rho, keep).matrix - r1)) < 1e-14);
  }

  SUBCASE("trace preserving and positive on random states") {
    std::mt19937_64 rng(3);
    const HilbertSpace s({{field(Site::A), 3}, {cavity(Site::A), 2}, {atom(Site::A), 2}});
    for (int trial = 0; trial < 20; ++trial) {
      const DensityMatrix rho{s, testing::random_density(rng, 12)};
      const std::array k1{field(Site::A), atom(Site::A)};
      const DensityMatrix red = partial_trace(rho, k1);
      CHECK(std::abs(red.matrix.trace() - rho.matrix.trace()) < 1e-10);
      CHECK_NOTHROW(validate(red));
    }
  }

  SUBCASE("pure-state overload agrees") {
    std::mt19937_64 rng(5);
    const HilbertSpace s({{field(Site::A), 3}, {cavity(Site::A), 2}, {atom(Site::A), 2}});
    Vector v = testing::random_matrix(rng, 12).col(0);
    v.normalize();
    const StateVector psi{s, v};
    const std::array k1{cavity(Site::A)};
    CHECK(max_abs(Matrix(partial_trace(psi, k1).matrix - partial_trace(projector(psi), k1).matrix)) < 1e-14);
  }
}

TEST_CASE("partial_transpose") {
  const DensityMatrix b = bell();
  const std::array sub{atom(Site::B)};
  const Matrix t = partial_transpose(b, sub);
  CHECK(hermitian_eigenvalues(t)(0) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(max_abs(Matrix(partial_transpose(DensityMatrix{b.space, t}, sub) - b.matrix)) == 0.0);

  std::mt19937_64 rng(9);
  const Matrix r1 = testing::random_density(rng, 2);
  const Matrix r2 = testing::random_density(rng, 2);
  Matrix prod(4, 4);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k)
        for (int l = 0; l < 2; ++l) prod(2 * i + k, 2 * j + l) = r1(i, j) * r2(k, l);
  CHECK(hermitian_eigenvalues(partial_transpose(DensityMatrix{b.space, prod}, sub))(0) > -1e-12);

  const std::array all{atom(Site::A), atom(Site::B)};
  CHECK_THROWS_AS(partial_transpose(b, all), std::invalid_argument);
}

TEST_CASE("hermitian_eigenvalues") {
  Matrix d = Matrix::Zero(3, 3);
  d(0, 0) = 3;
  d(1, 1) = 1;
  d(2, 2) = 2;
  const RealVector ev = hermitian_eigenvalues(d);
  CHECK(ev(0) == 1.0);
  CHECK(ev(1) == 2.0);
  CHECK(ev(2) == 3.0);

  Matrix x = Matrix::Zero(2, 2);
  x(0, 1) = x(1, 0) = 1.0;
  const RealVector ex = hermitian_eigenvalues(x);
  CHECK(ex(0) == doctest::Approx(-1.0));
  CHECK(ex(1) == doctest::Approx(1.0));

  // Werner p = 4/5 transposed on qubit A sits on the PPT boundary.
  const std::array qa{atom(Site::A)};
  const Matrix w = partial_transpose(DensityMatrix{three_qubit_space(), testing::werner8(0.8)}, qa);
  CHECK(std::abs(hermitian_eigenvalues(w)(0)) < 1e-10);

  Matrix bad = Matrix::Identity(2, 2);
  bad(0, 1) = 1e-3;
  CHECK_THROWS_AS(hermitian_eigenvalues(bad), std::invalid_argument);
  CHECK_THROWS_AS(hermitian_eigenvalues(Matrix::Zero(2, 3)), std::invalid_argument);
}

TEST_CASE("spectral round trip on random hermitian matrices") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix h = testing::random_hermitian(rng, 16);
    const RealVector ev = hermitian_eigenvalues(h);
    CHECK(std::abs(ev.sum() - h.trace().real()) < 1e-8 * 16);
    for (Eigen::Index k = 1; k < ev.size(); ++k) CHECK(ev(k) >= ev(k - 1));
    Eigen::SelfAdjointEigenSolver<Matrix> es(h);
    const Matrix back = es.eigenvectors() * es.eigenvalues().asDiagonal() * es.eigenvectors().adjoint();
    CHECK(max_abs(Matrix(back - h)) < 1e-8);
  }
}
