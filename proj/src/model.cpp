#include "cqedmap/model.hpp"

#include <cmath>
#include <stdexcept>

namespace cqedmap {

namespace {

void require_rate(double v, const char* name) {
  if (!std::isfinite(v) || v < 0.0) {
    throw std::invalid_argument(std::string("ModelParams: ") + name + " must be finite and >= 0");
  }
}

Matrix sigma_plus() {
  return local::sigma_minus().adjoint();
}

Operator scaled(Operator op, Complex factor) {
  op.matrix *= factor;
  return op;
}

}  // namespace

ModelParams ModelParams::multimode(double offdiag) {
  ModelParams p;
  for (int j = 0; j < 3; ++j) {
    for (int k = 0; k < 3; ++k) p.nu[j][k] = (j == k) ? 1.0 : offdiag;
  }
  return p;
}

void ModelParams::validate() const {
  if (g[0] != 1.0) {
    throw std::invalid_argument("ModelParams: g_A must be exactly 1 (all quantities are scaled to it)");
  }
  for (double v : g) require_rate(v, "g");
  for (const auto& row : nu) {
    for (double v : row) require_rate(v, "nu");
  }
  require_rate(kappa_c, "kappa_c");
  require_rate(kappa_f, "kappa_f");
  require_rate(gamma_a, "gamma_a");
  require_rate(nbar, "nbar");
  if (std::isnan(tau_off) || tau_off <= 0.0) {
    throw std::invalid_argument("ModelParams: tau_off must be > 0");
  }
  if (cutoff < 1) {
    throw std::invalid_argument("ModelParams: cutoff must be >= 1");
  }
}

InitialStateSpec InitialStateSpec::ghz() {
  return InitialStateSpec{};
}

InitialStateSpec InitialStateSpec::schmidt(Complex c0, Complex c1) {
  InitialStateSpec s;
  s.variant = PureSchmidt{c0, c1};
  return s;
}

InitialStateSpec InitialStateSpec::werner(double p) {
  InitialStateSpec s;
  s.variant = Werner{p};
  return s;
}

std::pair<Complex, Complex> InitialStateSpec::reference() const {
  if (const auto* s = std::get_if<PureSchmidt>(&variant)) return {s->c0, s->c1};
  return {std::numbers::sqrt2 / 2, std::numbers::sqrt2 / 2};
}

void InitialStateSpec::validate() const {
  if (const auto* s = std::get_if<PureSchmidt>(&variant)) {
    const double n = std::norm(s->c0) + std::norm(s->c1);
    if (std::abs(n - 1.0) > 1e-12) {
      throw std::invalid_argument("InitialStateSpec: Schmidt amplitudes not normalized");
    }
  } else {
    const double p = std::get<Werner>(variant).p;
    if (!(p >= 0.0 && p <= 1.0)) {
      throw std::invalid_argument("InitialStateSpec: Werner p must lie in [0, 1]");
    }
  }
}

std::string JumpChannel::name() const {
  std::string out;
  switch (kind) {
    case ChannelKind::AtomDecay: out = "atom_decay_"; break;
    case ChannelKind::FiberLoss: out = "fiber_loss_"; break;
    case ChannelKind::CavityLoss: out = "cavity_loss_"; break;
    case ChannelKind::CavityGain: out = "cavity_gain_"; break;
  }
  out += static_cast<char>('A' + site_index(site));
  return out;
}

HilbertSpace build_space(const ModelParams& params) {
  if (params.cutoff < 1) {
    throw std::invalid_argument("build_space: cutoff must be >= 1");
  }
  const int boson = params.cutoff + 1;
  std::vector<Subsystem> subs;
  for (Site s : kSites) subs.push_back({field(s), boson});
  for (Site s : kSites) subs.push_back({cavity(s), boson});
  for (Site s : kSites) subs.push_back({atom(s), 2});
  return HilbertSpace(std::move(subs));
}

Operator build_hamiltonian(const ModelParams& params, double tau) {
  if (tau < 0.0) {
    throw std::invalid_argument("build_hamiltonian: tau must be >= 0");
  }
  const HilbertSpace space = build_space(params);
  const int boson = params.cutoff + 1;
  const Matrix a = local::annihilation(boson);
  const Matrix ad = a.adjoint();

  const auto n = static_cast<Eigen::Index>(space.total_dim());
  SparseMatrix h(n, n);
  for (Site j : kSites) {
    const double gj = params.g[site_index(j)];
    if (gj == 0.0) continue;
    const auto c = embed_local(space, cavity(j), a).matrix;
    const auto cd = embed_local(space, cavity(j), ad).matrix;
    const auto sm = embed_local(space, atom(j), local::sigma_minus()).matrix;
    const auto sp = embed_local(space, atom(j), sigma_plus()).matrix;
    h += gj * (SparseMatrix(c * sp) + SparseMatrix(cd * sm));
  }
  if (params.drive_on(tau)) {
    for (Site j : kSites) {
      const auto c = embed_local(space, cavity(j), a).matrix;
      const auto cd = embed_local(space, cavity(j), ad).matrix;
      for (Site k : kSites) {
        const double v = params.nu[site_index(j)][site_index(k)];
        if (v == 0.0) continue;
        const auto f = embed_local(space, field(k), a).matrix;
        const auto fd = embed_local(space, field(k), ad).matrix;
        h += v * (SparseMatrix(c * fd) + SparseMatrix(cd * f));
      }
    }
  }
  h.prune(Complex(0.0, 0.0));
  return Operator{space, std::move(h)};
}

std::vector<JumpChannel> build_jump_channels(const ModelParams& params) {
  const HilbertSpace space = build_space(params);
  const int boson = params.cutoff + 1;
  const Matrix a = local::annihilation(boson);
  const auto n = static_cast<Eigen::Index>(space.total_dim());

  auto make = [&](ChannelKind kind, Site s, double rate, SubsystemLabel label, const Matrix& m) {
    if (rate <= 0.0) {
      return JumpChannel{kind, s, 0.0, Operator{space, SparseMatrix(n, n)}};
    }
    return JumpChannel{kind, s, rate, scaled(embed_local(space, label, m), std::sqrt(rate))};
  };

  std::vector<JumpChannel> out;
  out.reserve(12);
  for (Site s : kSites) out.push_back(make(ChannelKind::AtomDecay, s, params.gamma_a, atom(s), local::sigma_minus()));
  for (Site s : kSites) out.push_back(make(ChannelKind::FiberLoss, s, params.kappa_f, field(s), a));
  for (Site s : kSites) {
    out.push_back(make(ChannelKind::CavityLoss, s, params.kappa_c * (params.nbar + 1.0), cavity(s), a));
  }
  for (Site s : kSites) {
    out.push_back(make(ChannelKind::CavityGain, s, params.kappa_c * params.nbar, cavity(s), a.adjoint()));
  }
  return out;
}

bool channel_active(const JumpChannel& channel, const ModelParams& params, double tau) {
  if (channel.rate <= 0.0) return false;
  if (channel.kind == ChannelKind::FiberLoss) return params.drive_on(tau);
  return true;
}

Operator build_effective_hamiltonian(const ModelParams& params, double tau) {
  Operator h = build_hamiltonian(params, tau);
  for (const auto& ch : build_jump_channels(params)) {
    if (!channel_active(ch, params, tau)) continue;
    const SparseMatrix cdc = ch.op.matrix.adjoint() * ch.op.matrix;
    h.matrix -= Complex(0.0, 0.5) * cdc;
  }
  return h;
}

Operator total_excitation_operator(const HilbertSpace& space) {
  const auto n = static_cast<Eigen::Index>(space.total_dim());
  SparseMatrix total(n, n);
  for (const auto& sub : space.subsystems()) {
    total += embed_local(space, sub.label, local::number(sub.dim)).matrix;
  }
  return Operator{space, std::move(total)};
}

std::vector<char> truncation_risk(const ModelParams& params, const HilbertSpace& space, bool drive_on) {
  const std::size_t n = space.total_dim();
  const int top = params.cutoff;
  std::vector<std::size_t> fpos(3), cpos(3), apos(3);
  for (Site s : kSites) {
    fpos[site_index(s)] = space.position(field(s));
    cpos[site_index(s)] = space.position(cavity(s));
    apos[site_index(s)] = space.position(atom(s));
  }
  const bool gain = params.kappa_c * params.nbar > 0.0;

  std::vector<char> risk(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    bool at_risk = false;
    for (int j = 0; j < 3 && !at_risk; ++j) {
      if (space.occupation(i, cpos[j]) == top) {
        if (gain) at_risk = true;
        if (params.g[j] != 0.0 && space.occupation(i, apos[j]) > 0) at_risk = true;
        for (int k = 0; k < 3 && drive_on; ++k) {
          if (params.nu[j][k] != 0.0 && space.occupation(i, fpos[k]) > 0) at_risk = true;
        }
      }
      if (drive_on && space.occupation(i, fpos[j]) == top) {
        for (int c = 0; c < 3; ++c) {
          if (params.nu[c][j] != 0.0 && space.occupation(i, cpos[c]) > 0) at_risk = true;
        }
      }
    }
    risk[i] = at_risk ? 1 : 0;
  }
  return risk;
}

const StateVector& InitialState::pure() const {
  if (!is_pure()) {
    throw std::logic_error("InitialState::pure: state is mixed");
  }
  return components.front().state;
}

DensityMatrix InitialState::density_matrix() const {
  const auto n = static_cast<Eigen::Index>(space.total_dim());
  if (space.total_dim() > 4096) {
    throw std::length_error("InitialState::density_matrix: space too large for a dense matrix");
  }
  Matrix rho = Matrix::Zero(n, n);
  for (const auto& c : components) {
    rho += c.weight * c.state.amplitudes * c.state.amplitudes.adjoint();
  }
  return DensityMatrix{space, std::move(rho)};
}

StateVector field_basis_state(const HilbertSpace& space, int nA, int nB, int nC) {
  std::vector<int> occ(space.size(), 0);
  occ[space.position(field(Site::A))] = nA;
  occ[space.position(field(Site::B))] = nB;
  occ[space.position(field(Site::C))] = nC;
  Vector v = Vector::Zero(static_cast<Eigen::Index>(space.total_dim()));
  v(static_cast<Eigen::Index>(space.index(occ))) = 1.0;
  return StateVector{space, std::move(v)};
}

std::vector<StateVector> werner_eigenvectors(const HilbertSpace& space) {
  const double h = std::numbers::sqrt2 / 2;
  const Vector zero = field_basis_state(space, 0, 0, 0).amplitudes;
  const Vector one = field_basis_state(space, 1, 1, 1).amplitudes;
  std::vector<StateVector> out;
  out.push_back({space, h * (zero + one)});
  out.push_back({space, h * (zero - one)});
  for (int code = 1; code < 7; ++code) {
    out.push_back(field_basis_state(space, (code >> 2) & 1, (code >> 1) & 1, code & 1));
  }
  return out;
}

std::array<double, 8> werner_weights(double p) {
  std::array<double, 8> w{};
  w.fill(p / 8.0);
  w[0] = 1.0 - 7.0 * p / 8.0;
  return w;
}

InitialState initial_state(const InitialStateSpec& spec, const HilbertSpace& space) {
  spec.validate();
  InitialState out{space, {}};
  if (const auto* s = std::get_if<InitialStateSpec::PureSchmidt>(&spec.variant)) {
    Vector v = s->c0 * field_basis_state(space, 0, 0, 0).amplitudes +
               s->c1 * field_basis_state(space, 1, 1, 1).amplitudes;
    out.components.push_back({1.0, StateVector{space, std::move(v)}});
    return out;
  }
  const double p = std::get<InitialStateSpec::Werner>(spec.variant).p;
  const auto weights = werner_weights(p);
  auto vectors = werner_eigenvectors(space);
  for (std::size_t k = 0; k < vectors.size(); ++k) {
    if (weights[k] > 0.0) out.components.push_back({weights[k], std::move(vectors[k])});
  }
  return out;
}

}  // namespace cqedmap
