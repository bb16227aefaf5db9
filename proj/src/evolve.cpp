#include "cqedmap/evolve.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <exception>
#include <mutex>
#include <random>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include "cqedmap/entanglement.hpp"

namespace cqedmap {

namespace {

using Block8 = Eigen::Matrix<Complex, 8, 8>;

constexpr double kNormDriftAbort = 1e-6;
constexpr double kTraceDriftAbort = 1e-5;
constexpr double kJumpTimeTolerance = 1e-6;
constexpr double kRiskWarning = 1e-6;

// Quantities linear in the state; ensembles are averaged here before any
// nonlinear observable is formed.
struct LinearSample {
  std::array<double, 9> occ{};  // f_A..C, c_A..C, a_A..C
  double risk = 0.0;
  std::array<Block8, 3> reduced{Block8::Zero(), Block8::Zero(), Block8::Zero()};  // a, c, f

  void add(const LinearSample& o, double w) {
    for (std::size_t i = 0; i < occ.size(); ++i) occ[i] += w * o.occ[i];
    risk += w * o.risk;
    for (std::size_t g = 0; g < 3; ++g) reduced[g] += w * o.reduced[g];
  }
  void subtract(const LinearSample& o) { add(o, -1.0); }
  void scale(double w) {
    for (double& v : occ) v *= w;
    risk *= w;
    for (auto& r : reduced) r *= w;
  }
};

enum Column : std::size_t {
  kNf,
  kNc,
  kPe,
  kPurityA,
  kPurityC,
  kFidelityA,
  kFidelityC,
  kEa,
  kEc,
  kEf,
  kFidelityARaw,
  kFidelityCRaw,
  kPurityF,
  kPhaseA,
  kPhaseC,
  kSiteAsymmetry,
  kTruncRisk,
  kColumnCount
};

std::vector<double> derive(const LinearSample& s, const std::pair<Complex, Complex>& reference) {
  std::vector<double> v(kColumnCount);
  const Matrix ra = s.reduced[0];
  const Matrix rc = s.reduced[1];
  const Matrix rf = s.reduced[2];
  const Vector ref = schmidt_vector(reference.first, reference.second);
  const AlignedFidelity fa = aligned_fidelity(ra, reference.first, reference.second);
  const AlignedFidelity fc = aligned_fidelity(rc, reference.first, reference.second);
  v[kNf] = s.occ[0];
  v[kNc] = s.occ[3];
  v[kPe] = s.occ[6];
  v[kPurityA] = purity(ra);
  v[kPurityC] = purity(rc);
  v[kFidelityA] = fa.fidelity;
  v[kFidelityC] = fc.fidelity;
  v[kEa] = tripartite_negativity(ra);
  v[kEc] = tripartite_negativity(rc);
  v[kEf] = tripartite_negativity(rf);
  v[kFidelityARaw] = fidelity_to(ra, ref);
  v[kFidelityCRaw] = fidelity_to(rc, ref);
  v[kPurityF] = purity(rf);
  v[kPhaseA] = fa.phi;
  v[kPhaseC] = fc.phi;
  double asym = 0.0;
  for (int kind = 0; kind < 3; ++kind) {
    const auto* o = &s.occ[static_cast<std::size_t>(3 * kind)];
    asym = std::max(asym, std::max({o[0], o[1], o[2]}) - std::min({o[0], o[1], o[2]}));
  }
  v[kSiteAsymmetry] = asym;
  v[kTruncRisk] = s.risk;
  return v;
}

class Sampler {
 public:
  Sampler(const HilbertSpace& space, const BasisSubset& basis) : n_(basis.size()) {
    std::array<std::size_t, 9> pos{};
    for (Site s : kSites) {
      pos[static_cast<std::size_t>(site_index(s))] = space.position(field(s));
      pos[static_cast<std::size_t>(3 + site_index(s))] = space.position(cavity(s));
      pos[static_cast<std::size_t>(6 + site_index(s))] = space.position(atom(s));
    }
    occ_.resize(n_);
    for (std::size_t k = 0; k < n_; ++k) {
      const std::size_t full = basis.full_index(k);
      for (std::size_t i = 0; i < 9; ++i) occ_[k][i] = space.occupation(full, pos[i]);
    }
    // Reduced-state buckets: basis states sharing the complement occupations.
    const std::array<std::size_t, 3> first{6, 3, 0};  // a, c, f
    for (std::size_t g = 0; g < 3; ++g) {
      std::unordered_map<std::size_t, std::size_t> bucket_of;
      for (std::size_t k = 0; k < n_; ++k) {
        std::size_t rest = basis.full_index(k);
        int code = 0;
        bool qubit = true;
        for (std::size_t q = 0; q < 3; ++q) {
          const int o = occ_[k][first[g] + q];
          if (o > 1) qubit = false;
          code = 2 * code + o;
          rest -= static_cast<std::size_t>(o) * space.stride(pos[first[g] + q]);
        }
        if (!qubit) continue;
        auto [it, inserted] = bucket_of.try_emplace(rest, buckets_[g].size());
        if (inserted) buckets_[g].emplace_back();
        buckets_[g][it->second].push_back({k, code});
      }
    }
  }

  LinearSample from_vector(const Vector& psi, const std::vector<double>& risk) const {
    LinearSample s;
    const double norm2 = psi.squaredNorm();
    const double inv = 1.0 / norm2;
    for (std::size_t k = 0; k < n_; ++k) {
      const double p = std::norm(psi(static_cast<Eigen::Index>(k))) * inv;
      if (p == 0.0) continue;
      for (std::size_t i = 0; i < 9; ++i) s.occ[i] += p * occ_[k][i];
      s.risk += p * risk[k];
    }
    for (std::size_t g = 0; g < 3; ++g) {
      for (const auto& bucket : buckets_[g]) {
        for (const auto& [k1, q1] : bucket) {
          const Complex a = psi(static_cast<Eigen::Index>(k1)) * inv;
          if (a == Complex(0.0, 0.0)) continue;
          for (const auto& [k2, q2] : bucket) {
            s.reduced[g](q1, q2) += a * std::conj(psi(static_cast<Eigen::Index>(k2)));
          }
        }
      }
    }
    return s;
  }

  LinearSample from_matrix(const Matrix& rho, const std::vector<double>& risk) const {
    LinearSample s;
    for (std::size_t k = 0; k < n_; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const double p = rho(kk, kk).real();
      for (std::size_t i = 0; i < 9; ++i) s.occ[i] += p * occ_[k][i];
      s.risk += p * risk[k];
    }
    for (std::size_t g = 0; g < 3; ++g) {
      for (const auto& bucket : buckets_[g]) {
        for (const auto& [k1, q1] : bucket) {
          for (const auto& [k2, q2] : bucket) {
            s.reduced[g](q1, q2) += rho(static_cast<Eigen::Index>(k1), static_cast<Eigen::Index>(k2));
          }
        }
      }
    }
    return s;
  }

 private:
  struct Entry {
    std::size_t k;
    int code;
  };
  std::size_t n_;
  std::vector<std::array<int, 9>> occ_;
  std::array<std::vector<std::vector<Entry>>, 3> buckets_;
};

struct Segment {
  double t0;
  double t1;
  long steps;
  double h;
  bool drive_on;
};

std::vector<Segment> plan_segments(const TimeGrid& grid, double tau_off) {
  std::vector<double> cuts{grid.t_start};
  if (tau_off > grid.t_start && tau_off < grid.t_end) cuts.push_back(tau_off);
  cuts.push_back(grid.t_end);
  std::vector<Segment> segs;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double len = cuts[i + 1] - cuts[i];
    const long steps = std::max(1L, static_cast<long>(std::ceil(len / grid.dt - 1e-9)));
    segs.push_back({cuts[i], cuts[i + 1], steps, len / static_cast<double>(steps), cuts[i] < tau_off});
  }
  return segs;
}

// step(seg, t, t_next) advances the state; sample(t, seg) records it.
template <class Step, class Sample>
void run_grid(const std::vector<Segment>& segs, int every, Step&& step, Sample&& sample) {
  sample(segs.front().t0, segs.front());
  long n = 0;
  for (const auto& seg : segs) {
    for (long s = 0; s < seg.steps; ++s) {
      const double t = seg.t0 + static_cast<double>(s) * seg.h;
      const bool last = s + 1 == seg.steps;
      const double tn = last ? seg.t1 : seg.t0 + static_cast<double>(s + 1) * seg.h;
      step(seg, t, tn);
      ++n;
      if (n % every == 0 || last) sample(tn, seg);
    }
  }
}

class Rk4Vector {
 public:
  explicit Rk4Vector(Eigen::Index n) : k1_(n), k2_(n), k3_(n), k4_(n), tmp_(n) {}

  // out = psi(h) for psi' = a psi
  void advance(const SparseMatrix& a, const Vector& psi, Vector& out, double h) {
    k1_.noalias() = a * psi;
    tmp_ = psi + (0.5 * h) * k1_;
    k2_.noalias() = a * tmp_;
    tmp_ = psi + (0.5 * h) * k2_;
    k3_.noalias() = a * tmp_;
    tmp_ = psi + h * k3_;
    k4_.noalias() = a * tmp_;
    out = psi + (h / 6.0) * (k1_ + 2.0 * k2_ + 2.0 * k3_ + k4_);
  }

 private:
  Vector k1_, k2_, k3_, k4_, tmp_;
};

using ColSparse = Eigen::SparseMatrix<Complex, Eigen::ColMajor>;

struct Triplets {
  std::vector<Eigen::Index> row, col;
  std::vector<Complex> value;
};

Triplets triplets_of(const SparseMatrix& m) {
  Triplets t;
  for (Eigen::Index k = 0; k < m.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
      t.row.push_back(it.row());
      t.col.push_back(it.col());
      t.value.push_back(it.value());
    }
  }
  return t;
}

struct Lindbladian {
  ColSparse heff;
  std::vector<Triplets> c;

  // rho must be Hermitian.
  void apply(const Matrix& rho, Matrix& out, Matrix& tmp) const {
    tmp.noalias() = heff * rho;
    tmp *= -kI;
    out = tmp + tmp.adjoint();
    for (const Triplets& t : c) {
      const std::size_t m = t.value.size();
      for (std::size_t b = 0; b < m; ++b) {
        const Complex vb = std::conj(t.value[b]);
        const Complex* src = rho.col(t.col[b]).data();
        Complex* dst = out.col(t.row[b]).data();
        for (std::size_t a = 0; a < m; ++a) dst[t.row[a]] += t.value[a] * vb * src[t.col[a]];
      }
    }
  }
};

class Rk4Matrix {
 public:
  explicit Rk4Matrix(Eigen::Index n)
      : k1_(n, n), k2_(n, n), k3_(n, n), k4_(n, n), stage_(n, n), tmp_(n, n) {}

  void step(const Lindbladian& l, Matrix& rho, double h) {
    l.apply(rho, k1_, tmp_);
    stage_ = rho + (0.5 * h) * k1_;
    l.apply(stage_, k2_, tmp_);
    stage_ = rho + (0.5 * h) * k2_;
    l.apply(stage_, k3_, tmp_);
    stage_ = rho + h * k3_;
    l.apply(stage_, k4_, tmp_);
    rho += (h / 6.0) * (k1_ + 2.0 * k2_ + 2.0 * k3_ + k4_);
  }

 private:
  Matrix k1_, k2_, k3_, k4_, stage_, tmp_;
};

SparseMatrix minus_i(const SparseMatrix& m) {
  return SparseMatrix(-kI * m);
}

std::vector<std::size_t> support_of(const InitialState& init) {
  std::vector<std::size_t> out;
  const std::size_t n = init.space.total_dim();
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& c : init.components) {
      if (c.state.amplitudes(static_cast<Eigen::Index>(i)) != Complex(0.0, 0.0)) {
        out.push_back(i);
        break;
      }
    }
  }
  return out;
}

void require_space(const ModelParams& params, const HilbertSpace& space) {
  if (!(space == build_space(params))) {
    throw std::invalid_argument("initial state space does not match the model (check cutoff)");
  }
}

void require_closed(const ModelParams& params) {
  if (params.dissipative() || params.kappa_c * params.nbar > 0.0) {
    throw std::invalid_argument("Schrodinger evolution requires all dissipation rates to be zero");
  }
}

EvolutionRecord make_record(const std::vector<double>& times, const std::vector<LinearSample>& samples,
                            const EvolutionOptions& options) {
  EvolutionRecord rec;
  rec.times = times;
  rec.names = sample_column_names();
  rec.values.assign(kColumnCount, std::vector<double>(times.size()));
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto v = derive(samples[s], options.reference);
    for (std::size_t c = 0; c < kColumnCount; ++c) rec.values[c][s] = v[c];
    if (options.keep_reduced_states) {
      rec.reduced_states.push_back(
          {Matrix(samples[s].reduced[0]), Matrix(samples[s].reduced[1]), Matrix(samples[s].reduced[2])});
    }
  }
  return rec;
}

void finish(EvolutionRecord& rec, const Dynamics& dyn) {
  rec.diagnostics.basis_size = dyn.basis().size();
  rec.diagnostics.channel_names = dyn.channel_names();
  rec.diagnostics.channel_jumps.resize(dyn.channel_names().size(), 0);
  double risk = 0.0;
  if (!rec.values.empty()) {
    for (double r : rec.values[kTruncRisk]) risk = std::max(risk, r);
  }
  rec.diagnostics.max_truncation_risk = risk;
  if (risk > kRiskWarning) {
    rec.warnings.push_back("population up to " + std::to_string(risk) +
                           " on basis states at the truncation edge; increase cutoff");
  }
}

struct PureRun {
  std::vector<double> times;
  std::vector<LinearSample> samples;
  double max_norm_drift = 0.0;
};

PureRun run_pure(const Dynamics& dyn, const Sampler& sampler, const Vector& psi0, const TimeGrid& grid) {
  const auto segs = plan_segments(grid, dyn.params().tau_off);
  const SparseMatrix before = minus_i(dyn.segment(true).heff);
  const SparseMatrix after = minus_i(dyn.segment(false).heff);
  Rk4Vector rk(psi0.size());
  Vector psi = psi0;
  Vector next(psi0.size());
  const double norm0 = psi.squaredNorm();
  PureRun run;
  run_grid(
      segs, grid.sample_every,
      [&](const Segment& seg, double t, double tn) {
        rk.advance(seg.drive_on ? before : after, psi, next, tn - t);
        psi.swap(next);
      },
      [&](double t, const Segment& seg) {
        const double drift = std::abs(psi.squaredNorm() - norm0) / norm0;
        run.max_norm_drift = std::max(run.max_norm_drift, drift);
        if (drift > kNormDriftAbort) {
          throw std::runtime_error("evolve_schrodinger: norm drift " + std::to_string(drift) + " at tau = " +
                                   std::to_string(t) + "; reduce dt");
        }
        run.times.push_back(t);
        run.samples.push_back(sampler.from_vector(psi, dyn.segment(seg.drive_on).risk));
      });
  return run;
}

EvolutionRecord schrodinger_impl(const ModelParams& params, const InitialState& initial, const TimeGrid& grid,
                                 const EvolutionOptions& options) {
  require_closed(params);
  grid.validate();
  options.validate();
  require_space(params, initial.space);
  const Dynamics dyn(params, support_of(initial), options.reduce_basis);
  const Sampler sampler(dyn.space(), dyn.basis());

  std::vector<double> times;
  std::vector<LinearSample> total;
  double drift = 0.0;
  for (const auto& comp : initial.components) {
    const Vector psi = dyn.basis().restrict(comp.state.amplitudes);
    PureRun run = run_pure(dyn, sampler, psi, grid);
    drift = std::max(drift, run.max_norm_drift);
    if (total.empty()) {
      times = std::move(run.times);
      total.resize(run.samples.size());
    }
    for (std::size_t s = 0; s < total.size(); ++s) total[s].add(run.samples[s], comp.weight);
  }
  EvolutionRecord rec = make_record(times, total, options);
  rec.diagnostics.max_norm_drift = drift;
  finish(rec, dyn);
  return rec;
}

Lindbladian lindbladian_of(const Generator& g) {
  Lindbladian l{ColSparse(g.heff), {}};
  for (const auto& c : g.jumps) {
    if (c.nonZeros() > 0) l.c.push_back(triplets_of(c));
  }
  return l;
}

EvolutionRecord master_impl(const ModelParams& params, const Dynamics& dyn, Matrix rho, const TimeGrid& grid,
                            const EvolutionOptions& options) {
  const Sampler sampler(dyn.space(), dyn.basis());
  const auto segs = plan_segments(grid, params.tau_off);
  const Lindbladian before = lindbladian_of(dyn.segment(true));
  const Lindbladian after = lindbladian_of(dyn.segment(false));
  Rk4Matrix rk(rho.rows());

  const std::size_t n = dyn.basis().size();
  const std::size_t total_samples = [&] {
    std::size_t count = 0;
    for (const auto& s : segs) count += static_cast<std::size_t>(s.steps);
    return count / static_cast<std::size_t>(grid.sample_every) + segs.size() + 1;
  }();
  // Full eigensolves are costly above a few hundred states; thin them out.
  const std::size_t eig_stride = n <= 256 ? 1 : std::max<std::size_t>(1, total_samples / 20);

  std::vector<double> times;
  std::vector<LinearSample> samples;
  EvolutionDiagnostics diag;
  bool warned_trace = false, warned_herm = false, warned_pos = false;
  std::vector<std::string> warnings;
  run_grid(
      segs, grid.sample_every,
      [&](const Segment& seg, double t, double tn) { rk.step(seg.drive_on ? before : after, rho, tn - t); },
      [&](double t, const Segment& seg) {
        const double trace_err = std::abs(rho.trace() - Complex(1.0, 0.0));
        diag.max_trace_error = std::max(diag.max_trace_error, trace_err);
        if (trace_err > kTraceDriftAbort) {
          throw std::runtime_error("evolve_master: trace drift " + std::to_string(trace_err) + " at tau = " +
                                   std::to_string(t) + "; step size unstable, reduce dt");
        }
        const double herm = hermiticity_defect(rho);
        diag.max_hermiticity = std::max(diag.max_hermiticity, herm);
        if (samples.size() % eig_stride == 0 || t == segs.back().t1) {
          const double lam = hermitian_eigenvalues(0.5 * (rho + rho.adjoint())).minCoeff();
          diag.min_eigenvalue = std::min(diag.min_eigenvalue, lam);
          if (lam < -1e-7 && !warned_pos) {
            warned_pos = true;
            warnings.push_back("density matrix eigenvalue " + std::to_string(lam) + " at tau = " +
                               std::to_string(t));
          }
        }
        if (trace_err > 1e-7 && !warned_trace) {
          warned_trace = true;
          warnings.push_back("trace error " + std::to_string(trace_err) + " at tau = " + std::to_string(t));
        }
        if (herm > 1e-8 && !warned_herm) {
          warned_herm = true;
          warnings.push_back("hermiticity defect " + std::to_string(herm) + " at tau = " + std::to_string(t));
        }
        times.push_back(t);
        samples.push_back(sampler.from_matrix(rho, dyn.segment(seg.drive_on).risk));
      });

  EvolutionRecord rec = make_record(times, samples, options);
  rec.warnings = std::move(warnings);
  rec.diagnostics = diag;
  finish(rec, dyn);
  return rec;
}

struct LocalComponent {
  double weight;
  Vector psi;
};

struct BatchResult {
  std::vector<LinearSample> sums;
  std::vector<std::size_t> channel_jumps;
  std::size_t trajectories = 0;
  std::size_t jumps = 0;
};

class TrajectoryRunner {
 public:
  TrajectoryRunner(const Dynamics& dyn, const Sampler& sampler, const std::vector<LocalComponent>& comps,
                   const TimeGrid& grid, std::uint64_t seed)
      : dyn_(dyn),
        sampler_(sampler),
        comps_(comps),
        grid_(grid),
        segs_(plan_segments(grid, dyn.params().tau_off)),
        before_(minus_i(dyn.segment(true).heff)),
        after_(minus_i(dyn.segment(false).heff)),
        seed_(seed) {
    for (const auto& c : comps_) total_weight_ += c.weight;
  }

  std::vector<double> times() const {
    std::vector<double> out;
    run_grid(
        segs_, grid_.sample_every, [](const Segment&, double, double) {},
        [&](double t, const Segment&) { out.push_back(t); });
    return out;
  }

  void run(std::uint64_t index, BatchResult& batch) const {
    std::mt19937_64 gen(trajectory_seed(seed_, index));
    auto uniform = [&gen] {
      for (;;) {
        const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
        if (u > 0.0) return u;
      }
    };

    std::size_t comp = 0;
    if (comps_.size() > 1) {
      double u = uniform() * total_weight_;
      while (comp + 1 < comps_.size() && u > comps_[comp].weight) {
        u -= comps_[comp].weight;
        ++comp;
      }
    }
    Vector psi = comps_[comp].psi;
    Vector trial(psi.size());
    Vector scratch(psi.size());
    Rk4Vector rk(psi.size());
    double r = uniform();
    std::size_t s = 0;

    auto jump = [&](const Generator& g) {
      double total = 0.0;
      std::vector<double> w(g.jumps.size());
      for (std::size_t k = 0; k < g.jumps.size(); ++k) {
        scratch.noalias() = g.jumps[k] * trial;
        w[k] = scratch.squaredNorm();
        total += w[k];
      }
      if (!(total > 0.0)) {
        throw std::runtime_error("evolve_mcwf: jump triggered but every channel has zero weight");
      }
      double u = uniform() * total;
      std::size_t k = 0;
      while (k + 1 < w.size() && (u > w[k] || w[k] == 0.0)) {
        u -= w[k];
        ++k;
      }
      scratch.noalias() = g.jumps[k] * trial;
      psi = scratch / std::sqrt(scratch.squaredNorm());
      ++batch.channel_jumps[g.channel_index[k]];
      ++batch.jumps;
    };

    run_grid(
        segs_, grid_.sample_every,
        [&](const Segment& seg, double t, double tn) {
          const Generator& g = dyn_.segment(seg.drive_on);
          const SparseMatrix& a = seg.drive_on ? before_ : after_;
          double remaining = tn - t;
          for (;;) {
            rk.advance(a, psi, trial, remaining);
            if (g.jumps.empty() || trial.squaredNorm() > r) {
              psi.swap(trial);
              return;
            }
            double lo = 0.0;
            double hi = remaining;
            while (hi - lo > kJumpTimeTolerance) {
              const double mid = 0.5 * (lo + hi);
              rk.advance(a, psi, trial, mid);
              if (trial.squaredNorm() > r) {
                lo = mid;
              } else {
                hi = mid;
              }
            }
            rk.advance(a, psi, trial, hi);
            jump(g);
            r = uniform();
            remaining -= hi;
            if (remaining <= 0.0) return;
          }
        },
        [&](double, const Segment& seg) {
          batch.sums[s++].add(sampler_.from_vector(psi, dyn_.segment(seg.drive_on).risk), 1.0);
        });
    ++batch.trajectories;
  }

 private:
  const Dynamics& dyn_;
  const Sampler& sampler_;
  const std::vector<LocalComponent>& comps_;
  TimeGrid grid_;
  std::vector<Segment> segs_;
  SparseMatrix before_;
  SparseMatrix after_;
  std::uint64_t seed_;
  double total_weight_ = 0.0;
};

EvolutionRecord mcwf_impl(const ModelParams& params, const InitialState& initial, const TimeGrid& grid,
                          const EvolutionOptions& options) {
  grid.validate();
  options.validate();
  require_space(params, initial.space);
  // Without channels every trajectory is the same pure run.
  if (!params.dissipative() && initial.is_pure()) {
    EvolutionRecord rec = schrodinger_impl(params, initial, grid, options);
    rec.std_errors.assign(rec.names.size(), std::vector<double>(rec.size(), 0.0));
    rec.diagnostics.channel_jumps.assign(rec.diagnostics.channel_names.size(), 0);
    return rec;
  }
  const Dynamics dyn(params, support_of(initial), options.reduce_basis);
  const Sampler sampler(dyn.space(), dyn.basis());

  std::vector<LocalComponent> comps;
  for (const auto& c : initial.components) {
    Vector psi = dyn.basis().restrict(c.state.amplitudes);
    psi /= std::sqrt(psi.squaredNorm());
    comps.push_back({c.weight, std::move(psi)});
  }
  const TrajectoryRunner runner(dyn, sampler, comps, grid, options.seed);
  const std::vector<double> times = runner.times();

  const auto n_traj = static_cast<std::size_t>(options.n_trajectories);
  const std::size_t n_batches = std::min(static_cast<std::size_t>(options.n_batches), n_traj);
  std::vector<BatchResult> batches(n_batches);
  for (auto& b : batches) {
    b.sums.resize(times.size());
    b.channel_jumps.assign(dyn.channel_names().size(), 0);
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t b = next.fetch_add(1);
      if (b >= n_batches) return;
      try {
        for (std::size_t i = b * n_traj / n_batches; i < (b + 1) * n_traj / n_batches; ++i) {
          runner.run(i, batches[b]);
        }
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n_batches);
        return;
      }
    }
  };
  std::size_t workers = options.n_workers > 0 ? static_cast<std::size_t>(options.n_workers)
                                              : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n_batches);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  // Index-ordered reduction keeps the result independent of the worker count.
  std::vector<LinearSample> total(times.size());
  EvolutionDiagnostics diag;
  diag.channel_jumps.assign(dyn.channel_names().size(), 0);
  for (const auto& b : batches) {
    for (std::size_t s = 0; s < times.size(); ++s) total[s].add(b.sums[s], 1.0);
    for (std::size_t k = 0; k < diag.channel_jumps.size(); ++k) diag.channel_jumps[k] += b.channel_jumps[k];
    diag.jumps += b.jumps;
  }
  std::vector<LinearSample> mean = total;
  for (auto& m : mean) m.scale(1.0 / static_cast<double>(n_traj));

  EvolutionRecord rec = make_record(times, mean, options);
  rec.std_errors.assign(kColumnCount, std::vector<double>(times.size(), 0.0));
  if (n_batches >= 2) {
    const double nb = static_cast<double>(n_batches);
    for (std::size_t s = 0; s < times.size(); ++s) {
      std::vector<std::vector<double>> loo(n_batches);
      for (std::size_t b = 0; b < n_batches; ++b) {
        LinearSample rest = total[s];
        rest.subtract(batches[b].sums[s]);
        rest.scale(1.0 / static_cast<double>(n_traj - batches[b].trajectories));
        loo[b] = derive(rest, options.reference);
      }
      for (std::size_t c = 0; c < kColumnCount; ++c) {
        double avg = 0.0;
        for (const auto& v : loo) avg += v[c];
        avg /= nb;
        double ss = 0.0;
        for (const auto& v : loo) ss += (v[c] - avg) * (v[c] - avg);
        rec.std_errors[c][s] = std::sqrt((nb - 1.0) / nb * ss);
      }
    }
  }

  const double pos_tol = 3.0 / std::sqrt(static_cast<double>(n_traj));
  for (std::size_t s = 0; s < times.size(); ++s) {
    for (std::size_t g = 0; g < 3; ++g) {
      const Matrix r = mean[s].reduced[g];
      const double lam = hermitian_eigenvalues(0.5 * (r + r.adjoint())).minCoeff();
      diag.min_eigenvalue = std::min(diag.min_eigenvalue, lam);
    }
  }
  if (diag.min_eigenvalue < -pos_tol) {
    rec.warnings.push_back("ensemble reduced state eigenvalue " + std::to_string(diag.min_eigenvalue) +
                           " below statistical tolerance");
  }
  const auto jumps = diag.channel_jumps;
  rec.diagnostics = diag;
  finish(rec, dyn);
  rec.diagnostics.channel_jumps = jumps;
  return rec;
}

InitialState as_initial(const StateVector& psi) {
  const double n2 = psi.norm_squared();
  if (std::abs(n2 - 1.0) > 1e-10) {
    throw std::invalid_argument("initial state vector is not normalized");
  }
  return InitialState{psi.space, {{1.0, psi}}};
}

}  // namespace

void TimeGrid::validate() const {
  if (!std::isfinite(t_start) || !std::isfinite(t_end) || t_start < 0.0 || !(t_end > t_start)) {
    throw std::invalid_argument("TimeGrid: need 0 <= t_start < t_end");
  }
  if (!std::isfinite(dt) || !(dt > 0.0)) {
    throw std::invalid_argument("TimeGrid: dt must be > 0");
  }
  if (sample_every < 1) {
    throw std::invalid_argument("TimeGrid: sample_every must be >= 1");
  }
  if ((t_end - t_start) / dt > 1e9) {
    throw std::invalid_argument("TimeGrid: too many steps");
  }
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::Schrodinger: return "schrodinger";
    case Method::MasterEquation: return "master";
    case Method::MCWF: return "mcwf";
  }
  return "?";
}

std::optional<Method> parse_method(std::string_view text) {
  for (Method m : {Method::Schrodinger, Method::MasterEquation, Method::MCWF}) {
    if (to_string(m) == text) return m;
  }
  return std::nullopt;
}

void EvolutionOptions::validate() const {
  if (n_trajectories < 1) throw std::invalid_argument("EvolutionOptions: n_trajectories must be >= 1");
  if (n_batches < 1) throw std::invalid_argument("EvolutionOptions: n_batches must be >= 1");
  if (n_workers < 0) throw std::invalid_argument("EvolutionOptions: n_workers must be >= 0");
  const double n = std::norm(reference.first) + std::norm(reference.second);
  if (std::abs(n - 1.0) > 1e-10) throw std::invalid_argument("EvolutionOptions: reference not normalized");
}

const std::vector<std::string>& sample_column_names() {
  static const std::vector<std::string> names{
      "N_f",           "N_c",          "p_e",       "purity_a",       "purity_c", "fidelity_a",
      "fidelity_c",    "E_a",          "E_c",       "E_f",            "fidelity_a_raw",
      "fidelity_c_raw", "purity_f",    "phase_a",   "phase_c",        "site_asymmetry",
      "trunc_risk"};
  return names;
}

bool EvolutionRecord::has_column(std::string_view name) const {
  return std::find(names.begin(), names.end(), name) != names.end();
}

std::size_t EvolutionRecord::column_index(std::string_view name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::out_of_range("EvolutionRecord: no column " + std::string(name));
  return static_cast<std::size_t>(it - names.begin());
}

const std::vector<double>& EvolutionRecord::column(std::string_view name) const {
  return values[column_index(name)];
}

const std::vector<double>& EvolutionRecord::std_error(std::string_view name) const {
  if (std_errors.empty()) throw std::logic_error("EvolutionRecord: no standard errors (not an MCWF run)");
  return std_errors[column_index(name)];
}

BasisSubset BasisSubset::full(std::size_t dim) {
  BasisSubset b;
  b.full_dim_ = dim;
  b.indices_.resize(dim);
  b.local_.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    b.indices_[i] = i;
    b.local_[i] = static_cast<std::ptrdiff_t>(i);
  }
  return b;
}

BasisSubset BasisSubset::closure(std::size_t dim, std::span<const std::size_t> seeds,
                                 std::span<const SparseMatrix> operators) {
  using ColMajor = Eigen::SparseMatrix<Complex, Eigen::ColMajor>;
  std::vector<ColMajor> cols;
  for (const auto& op : operators) {
    if (static_cast<std::size_t>(op.rows()) != dim || static_cast<std::size_t>(op.cols()) != dim) {
      throw std::invalid_argument("BasisSubset::closure: operator dimension mismatch");
    }
    cols.emplace_back(op);
  }
  std::vector<char> seen(dim, 0);
  std::deque<std::size_t> queue;
  for (std::size_t s : seeds) {
    if (s >= dim) throw std::out_of_range("BasisSubset::closure: seed out of range");
    if (!seen[s]) {
      seen[s] = 1;
      queue.push_back(s);
    }
  }
  while (!queue.empty()) {
    const std::size_t j = queue.front();
    queue.pop_front();
    for (const auto& m : cols) {
      for (ColMajor::InnerIterator it(m, static_cast<Eigen::Index>(j)); it; ++it) {
        if (it.value() == Complex(0.0, 0.0)) continue;
        const auto i = static_cast<std::size_t>(it.row());
        if (!seen[i]) {
          seen[i] = 1;
          queue.push_back(i);
        }
      }
    }
  }
  BasisSubset b;
  b.full_dim_ = dim;
  b.local_.assign(dim, -1);
  for (std::size_t i = 0; i < dim; ++i) {
    if (seen[i]) {
      b.local_[i] = static_cast<std::ptrdiff_t>(b.indices_.size());
      b.indices_.push_back(i);
    }
  }
  return b;
}

SparseMatrix BasisSubset::restrict(const SparseMatrix& op) const {
  std::vector<Eigen::Triplet<Complex>> triplets;
  for (std::size_t r = 0; r < indices_.size(); ++r) {
    for (SparseMatrix::InnerIterator it(op, static_cast<Eigen::Index>(indices_[r])); it; ++it) {
      const std::ptrdiff_t c = local_[static_cast<std::size_t>(it.col())];
      if (c >= 0) triplets.emplace_back(static_cast<int>(r), static_cast<int>(c), it.value());
    }
  }
  const auto n = static_cast<Eigen::Index>(indices_.size());
  SparseMatrix out(n, n);
  out.setFromTriplets(triplets.begin(), triplets.end());
  return out;
}

Vector BasisSubset::restrict(const Vector& v) const {
  Vector out(static_cast<Eigen::Index>(indices_.size()));
  for (std::size_t k = 0; k < indices_.size(); ++k) {
    out(static_cast<Eigen::Index>(k)) = v(static_cast<Eigen::Index>(indices_[k]));
  }
  return out;
}

Matrix BasisSubset::restrict(const Matrix& m) const {
  const auto n = static_cast<Eigen::Index>(indices_.size());
  Matrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      out(i, j) = m(static_cast<Eigen::Index>(indices_[static_cast<std::size_t>(i)]),
                    static_cast<Eigen::Index>(indices_[static_cast<std::size_t>(j)]));
    }
  }
  return out;
}

Vector BasisSubset::lift(const Vector& v) const {
  Vector out = Vector::Zero(static_cast<Eigen::Index>(full_dim_));
  for (std::size_t k = 0; k < indices_.size(); ++k) {
    out(static_cast<Eigen::Index>(indices_[k])) = v(static_cast<Eigen::Index>(k));
  }
  return out;
}

Matrix BasisSubset::lift(const Matrix& m) const {
  const auto n = static_cast<Eigen::Index>(full_dim_);
  Matrix out = Matrix::Zero(n, n);
  for (std::size_t i = 0; i < indices_.size(); ++i) {
    for (std::size_t j = 0; j < indices_.size(); ++j) {
      out(static_cast<Eigen::Index>(indices_[i]), static_cast<Eigen::Index>(indices_[j])) =
          m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }
  return out;
}

Dynamics::Dynamics(const ModelParams& params, std::span<const std::size_t> support, bool reduce)
    : params_(params), space_(build_space(params)) {
  params_.validate();
  const bool switches = std::isfinite(params_.tau_off);
  const double t_after = switches ? params_.tau_off : 0.0;
  const Operator h_before = build_hamiltonian(params_, 0.0);
  const Operator h_after = build_hamiltonian(params_, t_after);
  const auto channels = build_jump_channels(params_);
  for (const auto& ch : channels) channel_names_.push_back(ch.name());

  std::vector<SparseMatrix> ops{h_before.matrix, h_after.matrix};
  for (const auto& ch : channels) {
    if (ch.rate > 0.0) ops.push_back(ch.op.matrix);
  }
  basis_ = reduce ? BasisSubset::closure(space_.total_dim(), support, ops) : BasisSubset::full(space_.total_dim());

  auto make = [&](const Operator& h, bool drive_on, double tau) {
    Generator g;
    g.drive_on = drive_on;
    g.h = basis_.restrict(h.matrix);
    SparseMatrix heff = h.matrix;
    for (std::size_t k = 0; k < channels.size(); ++k) {
      if (!channel_active(channels[k], params_, tau)) continue;
      const SparseMatrix cdc = channels[k].op.matrix.adjoint() * channels[k].op.matrix;
      heff -= Complex(0.0, 0.5) * cdc;
      g.jumps.push_back(basis_.restrict(channels[k].op.matrix));
      g.jumps_dagger.push_back(SparseMatrix(g.jumps.back().adjoint()));
      g.channel_index.push_back(k);
    }
    g.heff = basis_.restrict(heff);
    const auto risk = truncation_risk(params_, space_, drive_on);
    g.risk.resize(basis_.size());
    for (std::size_t k = 0; k < basis_.size(); ++k) g.risk[k] = risk[basis_.full_index(k)] ? 1.0 : 0.0;
    return g;
  };
  before_ = make(h_before, true, 0.0);
  after_ = switches ? make(h_after, false, params_.tau_off) : before_;
}

Matrix lindblad_rhs(const ModelParams& params, const DensityMatrix& rho, double tau) {
  require_space(params, rho.space);
  const Operator heff = build_effective_hamiltonian(params, tau);
  Lindbladian l{ColSparse(heff.matrix), {}};
  for (const auto& ch : build_jump_channels(params)) {
    if (channel_active(ch, params, tau)) l.c.push_back(triplets_of(ch.op.matrix));
  }
  Matrix out(rho.matrix.rows(), rho.matrix.cols());
  Matrix tmp(rho.matrix.rows(), rho.matrix.cols());
  l.apply(rho.matrix, out, tmp);
  return out;
}

EvolutionRecord evolve_schrodinger(const ModelParams& params, const StateVector& psi0, const TimeGrid& grid,
                                   const EvolutionOptions& options) {
  return schrodinger_impl(params, as_initial(psi0), grid, options);
}

EvolutionRecord evolve_schrodinger(const ModelParams& params, const InitialState& initial, const TimeGrid& grid,
                                   const EvolutionOptions& options) {
  return schrodinger_impl(params, initial, grid, options);
}

EvolutionRecord evolve_master(const ModelParams& params, const DensityMatrix& rho0, const TimeGrid& grid,
                              const EvolutionOptions& options) {
  grid.validate();
  options.validate();
  require_space(params, rho0.space);
  validate(rho0);
  std::vector<std::size_t> support;
  for (Eigen::Index i = 0; i < rho0.matrix.rows(); ++i) {
    if (rho0.matrix(i, i).real() > 0.0) support.push_back(static_cast<std::size_t>(i));
  }
  const Dynamics dyn(params, support, options.reduce_basis);
  return master_impl(params, dyn, dyn.basis().restrict(rho0.matrix), grid, options);
}

EvolutionRecord evolve_master(const ModelParams& params, const InitialState& initial, const TimeGrid& grid,
                              const EvolutionOptions& options) {
  grid.validate();
  options.validate();
  require_space(params, initial.space);
  const Dynamics dyn(params, support_of(initial), options.reduce_basis);
  const auto n = static_cast<Eigen::Index>(dyn.basis().size());
  Matrix rho = Matrix::Zero(n, n);
  for (const auto& c : initial.components) {
    const Vector v = dyn.basis().restrict(c.state.amplitudes);
    rho += c.weight * v * v.adjoint();
  }
  return master_impl(params, dyn, std::move(rho), grid, options);
}

EvolutionRecord evolve_mcwf(const ModelParams& params, const StateVector& psi0, const TimeGrid& grid,
                            const EvolutionOptions& options) {
  return mcwf_impl(params, as_initial(psi0), grid, options);
}

EvolutionRecord evolve_mcwf(const ModelParams& params, const InitialState& initial, const TimeGrid& grid,
                            const EvolutionOptions& options) {
  return mcwf_impl(params, initial, grid, options);
}

EvolutionRecord evolve(const ModelParams& params, const InitialState& initial, const TimeGrid& grid,
                       const EvolutionOptions& options) {
  switch (options.method) {
    case Method::Schrodinger: return evolve_schrodinger(params, initial, grid, options);
    case Method::MasterEquation: return evolve_master(params, initial, grid, options);
    case Method::MCWF: return evolve_mcwf(params, initial, grid, options);
  }
  throw std::invalid_argument("evolve: unknown method");
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t trajectory_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index));
}

}  // namespace cqedmap
