#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <numbers>

#include "cqedmap/evolve.hpp"
#include "cqedmap/observables.hpp"
#include "support.hpp"

using namespace cqedmap;

namespace {

constexpr double kPi = std::numbers::pi;

const Vector& ghz_plus() {
  static const Vector v = schmidt_vector(std::numbers::sqrt2 / 2, std::numbers::sqrt2 / 2);
  return v;
}

const Vector& ghz_minus() {
  static const Vector v = schmidt_vector(std::numbers::sqrt2 / 2, -std::numbers::sqrt2 / 2);
  return v;
}

std::size_t nearest(const EvolutionRecord& r, double t) {
  std::size_t best = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (std::abs(r.times[i] - t) < std::abs(r.times[best] - t)) best = i;
  }
  return best;
}

EvolutionRecord ghz_run(double t_end, int every = 1) {
  const ModelParams p;
  EvolutionOptions o;
  o.method = Method::Schrodinger;
  o.keep_reduced_states = true;
  const TimeGrid g{0.0, t_end, 1e-3, every};
  return evolve(p, initial_state(InitialStateSpec::ghz(), build_space(p)), g, o);
}

}  // namespace

TEST_CASE("populations on prepared states") {
  const ModelParams p;
  const HilbertSpace s = build_space(p);
  const StateVector vac = field_basis_state(s, 0, 0, 0);
  CHECK(mean_photon_number(vac, field(Site::A)) == 0.0);
  CHECK(excitation_probability(vac) == 0.0);
  CHECK_THROWS_AS(mean_photon_number(vac, atom(Site::A)), std::invalid_argument);

  const InitialState ghz = initial_state(InitialStateSpec::ghz(), s);
  for (Site j : kSites) CHECK(mean_photon_number(ghz.pure(), field(j)) == doctest::Approx(0.5));
  CHECK(mean_photon_number(ghz.density_matrix(), field(Site::B)) == doctest::Approx(0.5));

  const Matrix rc = reduced_state(ghz.pure(), SubsystemGroup::Cavities);
  CHECK(rc(0, 0) == Complex(1.0, 0.0));
  CHECK(std::abs(rc.trace() - 1.0) < 1e-12);
}

TEST_CASE("purity and fidelity") {
  CHECK(purity(ghz_plus() * ghz_plus().adjoint()) == doctest::Approx(1.0));
  CHECK(purity(Matrix::Identity(8, 8) / 8.0) == doctest::Approx(0.125));
  CHECK(fidelity_to(ghz_plus() * ghz_plus().adjoint(), ghz_plus()) == doctest::Approx(1.0));
  CHECK(fidelity_to(ghz_plus() * ghz_plus().adjoint(), ghz_minus()) == doctest::Approx(0.0));
  CHECK_THROWS_AS(fidelity_to(Matrix::Identity(4, 4), ghz_plus()), std::invalid_argument);
}

TEST_CASE("local phase") {
  std::mt19937_64 rng(1);
  const Matrix rho = testing::random_density(rng, 8);
  CHECK(max_abs(Matrix(apply_local_phase(rho, 0.0) - rho)) == 0.0);
  CHECK(max_abs(Matrix(apply_local_phase(apply_local_phase(rho, 0.7), -0.7) - rho)) < 1e-15);
  const Matrix turned = apply_local_phase(rho, 1.3);
  for (int q = 0; q < 8; ++q) CHECK(turned(q, q) == rho(q, q));

  const Vector v = apply_local_phase(ghz_plus(), kPi);
  CHECK(std::abs(std::abs(ghz_minus().dot(v)) - 1.0) < 1e-15);

  const AlignedFidelity a = aligned_fidelity(ghz_minus() * ghz_minus().adjoint(), ghz_plus()(0), ghz_plus()(7));
  CHECK(a.fidelity == doctest::Approx(1.0));
  CHECK(std::abs(std::remainder(3 * a.phi - kPi, 2 * kPi)) < 1e-12);
}

TEST_CASE("GHZ run observables") {
  const double t_off = kMappingTime;
  const EvolutionRecord r = ghz_run(t_off + kPi);
  const std::size_t i0 = nearest(r, t_off);
  REQUIRE(std::abs(r.times[i0] - t_off) < 1e-12);

  CHECK(r.column("N_f")[0] == doctest::Approx(0.5));
  CHECK(r.column("N_f")[i0] < 1e-6);
  CHECK(r.column("p_e")[i0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(r.column("p_e")[nearest(r, t_off + kPi / 2)] < 1e-6);
  CHECK(r.column("site_asymmetry")[i0] < 1e-10);

  // Atoms carry the mapped GHZ state up to a local phase.
  const Matrix ra = r.reduced_states[i0][0];
  CHECK(r.column("fidelity_a")[i0] >= 0.999);
  const double f_minus = fidelity_to(ra, ghz_minus());
  const double f_plus = fidelity_to(ra, ghz_plus());
  CHECK(std::max(f_minus, f_plus) > 1 - 1e-6);
  CHECK(std::abs(r.reduced_states[0][1](0, 0) - 1.0) < 1e-15);

  // One Rabi half-period later the local phase has flipped.
  const Matrix ra1 = r.reduced_states.back()[0];
  CHECK(fidelity_to(ra1, f_minus > f_plus ? ghz_plus() : ghz_minus()) > 1 - 1e-6);

  for (std::size_t k = 0; k < r.size(); ++k) {
    CHECK(std::abs(r.column("N_f")[k] + r.column("N_c")[k] + r.column("p_e")[k] - 0.5) < 1e-6);
    for (const auto& red : r.reduced_states[k]) CHECK(std::abs(red.trace() - 1.0) < 1e-8);
  }

  // Atoms are pure at the atomic and cavity mapping times, where fidelity
  // peaks or bottoms out; purity is lowest a quarter period after switch-off.
  const auto& pa = r.column("purity_a");
  for (double t : {t_off, t_off + kPi / 2, t_off + kPi}) CHECK(pa[nearest(r, t)] > 1 - 1e-6);
  std::size_t pmin = i0;
  for (std::size_t k = i0; k < r.size(); ++k) {
    if (pa[k] < pa[pmin]) pmin = k;
  }
  CHECK(std::abs(r.times[pmin] - (t_off + kPi / 4)) < 2e-3);
  const auto& fa = r.column("fidelity_a");
  std::size_t fmax = i0 + 1;
  for (std::size_t k = i0 + 1; k < r.size(); ++k) {
    if (fa[k] > fa[fmax]) fmax = k;
  }
  std::size_t pmax = i0 + r.size() / 2;
  for (std::size_t k = pmax; k < r.size(); ++k) {
    if (pa[k] > pa[pmax]) pmax = k;
  }
  CHECK(std::abs(static_cast<long>(fmax) - static_cast<long>(pmax)) <= 1);
}

TEST_CASE("Werner input maps onto the atoms") {
  const ModelParams p;
  EvolutionOptions o;
  o.method = Method::Schrodinger;
  o.keep_reduced_states = true;
  const double pw = 0.3;
  const TimeGrid g{0.0, kMappingTime, 1e-3, 100};
  const EvolutionRecord r = evolve(p, initial_state(InitialStateSpec::werner(pw), build_space(p)), g, o);
  const Matrix ra = r.reduced_states.back()[0];
  // Up to the local phase, the atoms hold the same Werner state.
  const Matrix aligned = apply_local_phase(ra, -r.column("phase_a").back());
  CHECK(max_abs(Matrix(aligned - testing::werner8(pw))) < 1e-6);
}
