#include "cqedmap/entanglement.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cqedmap {

namespace {

void require_rho8(const Matrix& m) {
  if (m.rows() != 8 || m.cols() != 8) {
    throw std::invalid_argument("expected an 8x8 three-qubit matrix");
  }
}

// Bit of qubit A is the most significant.
int cut_mask(Cut cut) {
  switch (cut) {
    case Cut::A_BC: return 4;
    case Cut::B_AC: return 2;
    case Cut::C_AB: return 1;
  }
  return 0;
}

Matrix transpose_qubit(const Matrix& rho8, int mask) {
  Matrix out(8, 8);
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) {
      const int ti = (i & ~mask) | (j & mask);
      const int tj = (j & ~mask) | (i & mask);
      out(ti, tj) = rho8(i, j);
    }
  }
  return out;
}

int popcount3(int q) {
  return (q & 1) + ((q >> 1) & 1) + ((q >> 2) & 1);
}

}  // namespace

std::string_view to_string(ClassLabel label) {
  switch (label) {
    case ClassLabel::GHZclass: return "GHZclass";
    case ClassLabel::Wclass: return "Wclass";
    case ClassLabel::INS: return "INS";
    case ClassLabel::FullySeparable: return "FullySeparable";
  }
  return "?";
}

std::optional<ClassLabel> parse_class_label(std::string_view text) {
  for (ClassLabel l : {ClassLabel::GHZclass, ClassLabel::Wclass, ClassLabel::INS, ClassLabel::FullySeparable}) {
    if (to_string(l) == text) return l;
  }
  return std::nullopt;
}

std::string_view to_string(EsdKind kind) {
  return kind == EsdKind::Death ? "Death" : "Birth";
}

double bipartite_negativity(const Matrix& rho8, Cut cut) {
  require_rho8(rho8);
  const RealVector ev = hermitian_eigenvalues(transpose_qubit(rho8, cut_mask(cut)), 1e-6);
  double neg = 0.0;
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    if (ev(k) < 0.0) neg -= ev(k);
  }
  return 2.0 * neg;
}

double tripartite_negativity(const Matrix& rho8) {
  const double n1 = bipartite_negativity(rho8, Cut::A_BC);
  const double n2 = bipartite_negativity(rho8, Cut::B_AC);
  const double n3 = bipartite_negativity(rho8, Cut::C_AB);
  return std::cbrt(n1 * n2 * n3);
}

WitnessReport witness_values(const Matrix& rho8) {
  require_rho8(rho8);
  const double h = std::sqrt(0.5);
  const AlignedFidelity a = aligned_fidelity(rho8, h, h);
  return {0.75 - a.fidelity, 0.5 - a.fidelity, a.phi};
}

StructureCheck check_structure(const Matrix& rho8, double tol) {
  require_rho8(rho8);
  StructureCheck s{true, 0.0, 0.0, {}};
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) {
      if (i == j || (i == 0 && j == 7) || (i == 7 && j == 0)) continue;
      s.stray_coherence = std::max(s.stray_coherence, std::abs(rho8(i, j)));
    }
  }
  for (int k = 1; k <= 2; ++k) {
    double lo = 1e300;
    double hi = -1e300;
    for (int q = 0; q < 8; ++q) {
      if (popcount3(q) != k) continue;
      lo = std::min(lo, rho8(q, q).real());
      hi = std::max(hi, rho8(q, q).real());
    }
    s.diagonal_asymmetry = std::max(s.diagonal_asymmetry, hi - lo);
  }
  if (s.stray_coherence > tol) {
    s.ok = false;
    s.diagnostic = "stray coherence " + std::to_string(s.stray_coherence);
  }
  if (s.diagonal_asymmetry > tol) {
    s.ok = false;
    if (!s.diagnostic.empty()) s.diagnostic += "; ";
    s.diagnostic += "asymmetric diagonal " + std::to_string(s.diagonal_asymmetry);
  }
  return s;
}

std::array<double, 3> ppt_min_eigenvalues(const Matrix& rho8) {
  require_rho8(rho8);
  const double c = std::abs(rho8(0, 7));
  // Under T_A the (0,7) coherence moves to (3,4); T_B gives (5,2), T_C (6,1).
  const int pairs[3][2] = {{3, 4}, {5, 2}, {6, 1}};
  std::array<double, 3> out{};
  for (int k = 0; k < 3; ++k) {
    const double d1 = rho8(pairs[k][0], pairs[k][0]).real();
    const double d2 = rho8(pairs[k][1], pairs[k][1]).real();
    out[k] = 0.5 * (d1 + d2) - std::hypot(0.5 * (d1 - d2), c);
  }
  return out;
}

bool full_separability_test(const Matrix& rho8, double eps_e) {
  const StructureCheck s = check_structure(rho8);
  if (!s.ok) {
    throw std::domain_error("full_separability_test: " + s.diagnostic);
  }
  const auto lam = ppt_min_eigenvalues(rho8);
  return std::all_of(lam.begin(), lam.end(), [&](double l) { return l >= -0.5 * eps_e; });
}

Classification classify(const Matrix& rho8, const ClassifyOptions& options) {
  Classification c{std::nullopt, {}, tripartite_negativity(rho8), witness_values(rho8)};
  const StructureCheck s = check_structure(rho8, options.structure_tol);
  if (!s.ok) {
    c.diagnostic = "classification declined: " + s.diagnostic;
    return c;
  }
  if (c.witness.w_ghz < -options.eps_w) {
    c.label = ClassLabel::GHZclass;
  } else if (c.witness.w_bisep < -options.eps_w) {
    c.label = ClassLabel::Wclass;
  } else if (c.negativity > options.eps_e) {
    c.label = ClassLabel::INS;
  } else {
    c.label = ClassLabel::FullySeparable;
  }
  const bool separable = full_separability_test(rho8, options.eps_e);
  if (separable != (c.negativity <= options.eps_e)) {
    c.diagnostic = "separability test disagrees with negativity " + std::to_string(c.negativity);
  }
  return c;
}

std::vector<EsdEvent> detect_esd_esb(std::span<const double> times, std::span<const double> values,
                                     SubsystemGroup subsystem, double eps) {
  if (times.size() != values.size()) {
    throw std::invalid_argument("detect_esd_esb: times and values differ in length");
  }
  std::vector<EsdEvent> events;
  for (std::size_t k = 1; k < times.size(); ++k) {
    const bool was = values[k - 1] > eps;
    const bool is = values[k] > eps;
    if (was == is) continue;
    const double frac = (values[k - 1] - eps) / (values[k - 1] - values[k]);
    const double t = times[k - 1] + frac * (times[k] - times[k - 1]);
    events.push_back({was ? EsdKind::Death : EsdKind::Birth, subsystem, t});
  }
  return events;
}

}  // namespace cqedmap
