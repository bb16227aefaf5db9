#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "cqedmap/io.hpp"
#include "cqedmap/linalg.hpp"
#include "cqedmap/observables.hpp"

#ifndef CQEDMAP_VERSION
#define CQEDMAP_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using namespace cqedmap;

namespace {

std::vector<double> steps(double first, double step, int count) {
  std::vector<double> v;
  for (int i = 0; i < count; ++i) v.push_back(first + step * i);
  return v;
}

std::vector<double> or_default(const std::vector<double>& given, std::vector<double> fallback) {
  return given.empty() ? fallback : given;
}

// Files are staged as NAME.partial and renamed only once the whole run succeeded.
class OutputDir {
 public:
  explicit OutputDir(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  fs::path stage(const std::string& name) {
    staged_.push_back(name);
    return dir_ / (name + ".partial");
  }

  void commit() {
    for (const auto& name : staged_) fs::rename(dir_ / (name + ".partial"), dir_ / name);
    staged_.clear();
  }

 private:
  fs::path dir_;
  std::vector<std::string> staged_;
};

struct Manifest {
  std::string scenario;
  std::vector<std::pair<std::string, std::string>> config;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
  std::optional<double> wall_seconds;
  std::string status = "running";

  void write(const fs::path& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << "scenario = " << scenario << '\n';
    f << "code_version = " << CQEDMAP_VERSION << '\n';
    f << "seed = " << seed << '\n';
    f << "status = " << status << '\n';
    if (wall_seconds) f << "wall_seconds = " << format_number(*wall_seconds) << '\n';
    f << "[config]\n";
    for (const auto& [k, v] : config) f << k << " = " << v << '\n';
    f << "[warnings]\n";
    for (const auto& w : warnings) f << w << '\n';
  }
};

Table cross_check_table(const SweepResult& s, const std::string& rate_name) {
  Table t{{rate_name, "quantity", "tau", "master", "mcwf", "mcwf_se", "z"}, {}};
  for (const auto& x : s.cross_checks) {
    t.rows.push_back({x.rate, x.quantity, x.tau, x.reference, x.mcwf, x.std_error, x.z()});
  }
  return t;
}

struct Options {
  std::string config_path;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> trajectories;
  std::optional<double> dt;
  std::optional<int> cutoff;
  bool timing = false;
  std::string matrix_path;
};

int run_scenario(const std::string& scenario, const Options& opt) {
  ParsedConfig parsed = opt.config_path.empty() ? ParsedConfig{} : load_config(opt.config_path);
  if (opt.seed) apply_setting(parsed, "seed", std::to_string(*opt.seed), "--seed");
  if (opt.trajectories) apply_setting(parsed, "trajectories", std::to_string(*opt.trajectories), "--trajectories");
  if (opt.dt) apply_setting(parsed, "dt", format_number(*opt.dt), "--dt");
  if (opt.cutoff) apply_setting(parsed, "cutoff", std::to_string(*opt.cutoff), "--cutoff");
  finalize_config(parsed, opt.config_path.empty() ? "<defaults>" : opt.config_path);
  ScenarioConfig& c = parsed.config;

  OutputDir out(opt.out);
  Manifest manifest;
  manifest.scenario = scenario;
  manifest.seed = c.evolution.seed;
  manifest.config = config_echo(c);
  const fs::path manifest_path = out.stage("manifest.txt");
  manifest.write(manifest_path);
  const auto start = std::chrono::steady_clock::now();

  try {
    if (scenario == "fig1") {
      const Fig1Result r = run_fig1(c);
      write_series_csv(r.series, out.stage("fig1_series.csv"));
      write_table_csv(r.peaks, out.stage("fig1_peaks.csv"));
      manifest.warnings = r.series.warnings;
    } else if (scenario == "werner") {
      const auto sections = or_default(c.p_list, {0.0, 0.2, 0.4, 0.6});
      const WernerResult r = run_werner_plane(c, steps(0.0, 0.02, 51), sections);
      write_table_csv(r.map, out.stage("werner_map.csv"));
      write_table_csv(r.sections, out.stage("werner_sections.csv"));
      write_table_csv(r.events, out.stage("esd_events.csv"));
      manifest.warnings = r.warnings;
    } else if (scenario == "sweep-kappa-c") {
      const auto kappas = or_default(c.kappa_list, steps(0.05, 0.05, 10));
      const auto anchors = or_default(c.anchor_list, {0.1, 0.5});
      const SweepResult r = sweep_cavity_decay(c, kappas, anchors);
      write_table_csv(r.table, out.stage("sweep_kappa_c.csv"));
      write_table_csv(r.fits, out.stage("fits.csv"));
      write_table_csv(cross_check_table(r, "kappa_c"), out.stage("crosscheck_kappa_c.csv"));
      manifest.warnings = r.warnings;
    } else if (scenario == "sweep-kappa-f") {
      const auto kappas = or_default(c.kappa_list, steps(0.1, 0.1, 10));
      const auto anchors = or_default(c.anchor_list, {0.5, 1.0});
      const SweepResult r = sweep_fiber_decay(c, kappas, anchors);
      write_table_csv(r.table, out.stage("sweep_kappa_f.csv"));
      write_table_csv(r.fits, out.stage("fits.csv"));
      write_table_csv(cross_check_table(r, "kappa_f"), out.stage("crosscheck_kappa_f.csv"));
      manifest.warnings = r.warnings;
    } else if (scenario == "multimode") {
      if (parsed.has("switch_off_policy") && c.switch_off_policy == SwitchOffPolicy::FixedTime) {
        throw std::invalid_argument("multimode needs switch_off_policy max_pe, min_nf or max_nc");
      }
      const SwitchOffPolicy policy =
          parsed.has("switch_off_policy") ? c.switch_off_policy : SwitchOffPolicy::MaxNc;
      const MultimodeResult r = run_multimode(c, or_default(c.nu_list, steps(0.0, 0.1, 15)), policy);
      write_table_csv(r.table, out.stage("multimode.csv"));
      write_table_csv(r.traces, out.stage("multimode_traces.csv"));
      manifest.warnings = r.warnings;
    } else if (scenario == "robustness") {
      const RobustnessResult r =
          robustness_tau_off(c, or_default(c.delta_list, {-0.2, -0.1, -0.05, 0.0, 0.05, 0.1, 0.2}));
      write_table_csv(r.table, out.stage("robustness.csv"));
      manifest.warnings = r.warnings;
    }
  } catch (const std::exception& e) {
    manifest.status = std::string("failed: ") + e.what();
    manifest.write(manifest_path);
    throw;
  }

  if (opt.timing) {
    manifest.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  manifest.status = "ok";
  manifest.write(manifest_path);
  out.commit();
  for (const auto& w : manifest.warnings) std::cerr << "warning: " << w << '\n';
  return 0;
}

int run_classify(const Options& opt) {
  const Matrix rho = read_complex_matrix_csv(opt.matrix_path);
  if (rho.rows() != 8) throw std::invalid_argument("classify: expected an 8x8 density matrix");
  if (hermiticity_defect(rho) > 1e-8) throw std::invalid_argument("classify: matrix is not Hermitian");
  if (std::abs(rho.trace() - Complex(1.0, 0.0)) > 1e-8) throw std::invalid_argument("classify: trace is not 1");
  const Classification c = classify(rho);
  std::cout << "label = " << (c.label ? std::string(to_string(*c.label)) : std::string("declined")) << '\n';
  if (!c.label) std::cout << "diagnostic = " << c.diagnostic << '\n';
  std::cout << "negativity = " << format_number(c.negativity) << '\n';
  std::cout << "negativity_A = " << format_number(bipartite_negativity(rho, Cut::A_BC)) << '\n';
  std::cout << "negativity_B = " << format_number(bipartite_negativity(rho, Cut::B_AC)) << '\n';
  std::cout << "negativity_C = " << format_number(bipartite_negativity(rho, Cut::C_AB)) << '\n';
  std::cout << "w_ghz = " << format_number(c.witness.w_ghz) << '\n';
  std::cout << "w_bisep = " << format_number(c.witness.w_bisep) << '\n';
  std::cout << "purity = " << format_number(purity(rho)) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fiber-coupled cavity QED state mapping: scenarios and classifier"};
  app.require_subcommand(1);
  Options opt;

  const std::vector<std::pair<std::string, std::string>> scenarios{
      {"fig1", "GHZ mapping dynamics without dissipation"},
      {"werner", "Werner noise plane: class map, sections and ESD/ESB events"},
      {"sweep-kappa-c", "cavity decay sweep with exponential fits"},
      {"sweep-kappa-f", "fiber decay sweep with exponential fits"},
      {"multimode", "multimode coupling sweep"},
      {"robustness", "switch-off time robustness"},
  };
  for (const auto& [name, help] : scenarios) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config_path, "flat key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "output directory")->capture_default_str();
    sub->add_option("--seed", opt.seed, "random seed");
    sub->add_option("--trajectories", opt.trajectories, "MCWF trajectories")->check(CLI::PositiveNumber);
    sub->add_option("--dt", opt.dt, "integration step")->check(CLI::PositiveNumber);
    sub->add_option("--cutoff", opt.cutoff, "Fock cutoff per mode")->check(CLI::PositiveNumber);
    sub->add_flag("--timing", opt.timing, "record wall time in the manifest");
  }
  CLI::App* cls = app.add_subcommand("classify", "classify an 8x8 density matrix read from CSV");
  cls->add_option("matrix", opt.matrix_path, "CSV of complex entries (a+bj)")->required()->check(CLI::ExistingFile);

  if (argc > 1 && argv[1][0] != '-' && app.get_subcommand_no_throw(argv[1]) == nullptr) {
    std::cerr << "error: unknown subcommand '" << argv[1] << "'\n\n" << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    CLI::App* chosen = app.get_subcommands().front();
    if (chosen->get_name() == "classify") return run_classify(opt);
    return run_scenario(chosen->get_name(), opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
