#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <unistd.h>

#include "cqedmap/io.hpp"

using namespace cqedmap;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / ("cqedmap_test_io_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

template <class F>
ConfigError config_error(F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e;
  }
  FAIL("expected a ConfigError");
  return ConfigError("", 0, "", "");
}

}  // namespace

TEST_CASE("config values") {
  SUBCASE("werner_p selects a Werner input") {
    const ParsedConfig p = parse_config("werner_p = 0.2\n");
    const auto* w = std::get_if<InitialStateSpec::Werner>(&p.config.initial.variant);
    REQUIRE(w != nullptr);
    CHECK(w->p == 0.2);
  }
  SUBCASE("tau_off literal") {
    CHECK(parse_config("tau_off = 2.2214414688974\n").config.base.tau_off == 2.2214414688974);
    const ParsedConfig p = parse_config("tau_off = 2.221441469079183\n");
    CHECK(std::abs(p.config.base.tau_off - std::numbers::pi / std::numbers::sqrt2) < 1e-12);
  }
  SUBCASE("defaults") {
    const ParsedConfig p = parse_config("# nothing\n\n");
    CHECK(p.config.dt == 1e-3);
    CHECK(p.config.sample_every == 10);
    CHECK(p.config.base.cutoff == 1);
    CHECK(p.config.evolution.n_trajectories == 5000);
    CHECK(p.config.initial.is_pure());
    CHECK(p.given.empty());
  }
  SUBCASE("every documented key parses") {
    const std::string text =
        "g_b = 1\ng_c = 1\nnu_offdiag = 1 # inline comment\nkappa_c = 0.1\nkappa_f = 0\ngamma_a = 0\nnbar = 0\n"
        "tau_off = 2.2\nswitch_off_policy = max_pe\ncutoff = 2\ndt = 0.002\nt_end = 5\nsample_every = 5\n"
        "method = master\ntrajectories = 100\nseed = 42\ninitial = schmidt\nschmidt_c0_re = 0.6\n"
        "schmidt_c0_im = 0\nschmidt_c1_re = 0\nschmidt_c1_im = 0.8\np_list = 0, 0.2\nkappa_list = 0.1,0.2\n"
        "nu_list = 0.5\ndelta_list = -0.1, 0.1\nanchor_list = 0.1\n";
    const ParsedConfig p = parse_config(text);
    CHECK(p.config.base.kappa_c == 0.1);
    CHECK(p.config.switch_off_policy == SwitchOffPolicy::MaxPe);
    CHECK(p.config.base.cutoff == 2);
    CHECK(p.config.t_end.value() == 5.0);
    CHECK(p.config.evolution.method == Method::MasterEquation);
    CHECK(p.config.evolution.seed == 42);
    CHECK(p.config.p_list == std::vector<double>{0.0, 0.2});
    CHECK(p.config.delta_list == std::vector<double>{-0.1, 0.1});
    const auto [c0, c1] = p.config.initial.reference();
    CHECK(std::abs(c0 - Complex(0.6, 0.0)) < 1e-15);
    CHECK(std::abs(c1 - Complex(0.0, 0.8)) < 1e-15);
    CHECK(p.given.size() == 26);
  }
  SUBCASE("echo reparses to the same config") {
    const ParsedConfig p = parse_config("werner_p = 0.3\nkappa_c = 0.1\nnu_list = 0.1,1.4\n");
    std::string text;
    for (const auto& [k, v] : config_echo(p.config)) {
      if (k == "t_end" && v == "default") continue;
      text += k + " = " + v + "\n";
    }
    const ParsedConfig q = parse_config(text);
    CHECK(config_echo(q.config) == config_echo(p.config));
  }
}

TEST_CASE("config errors") {
  SUBCASE("range error names the key") {
    const ConfigError e = config_error([] { parse_config("werner_p = 1.5\n", "run.cfg"); });
    CHECK(e.key() == "werner_p");
    CHECK(e.line() == 1);
    CHECK(std::string(e.what()).find("werner_p") != std::string::npos);
  }
  SUBCASE("malformed line") {
    const ConfigError e = config_error([] { parse_config("dt = 0.01\nkappa_c 0.1\n"); });
    CHECK(e.line() == 2);
  }
  SUBCASE("non-numeric value") {
    const ConfigError e = config_error([] { parse_config("\n\nkappa_c = fast\n"); });
    CHECK(e.key() == "kappa_c");
    CHECK(e.line() == 3);
  }
  SUBCASE("unknown keys are all listed") {
    const ConfigError e = config_error([] { parse_config("alpha = 1\ndt = 0.01\nbeta = 2\n"); });
    const std::string msg = e.what();
    CHECK(msg.find("alpha") != std::string::npos);
    CHECK(msg.find("beta") != std::string::npos);
  }
  SUBCASE("duplicate key") {
    const ConfigError e = config_error([] { parse_config("dt = 0.01\ndt = 0.02\n"); });
    CHECK(e.key() == "dt");
  }
  SUBCASE("conflicting initial state") {
    config_error([] { parse_config("initial = ghz\nwerner_p = 0.2\n"); });
    config_error([] { parse_config("schmidt_c0_re = 0.1\n"); });
  }
  SUBCASE("negative rate and zero cutoff") {
    CHECK(config_error([] { parse_config("gamma_a = -0.1\n"); }).key() == "gamma_a");
    CHECK(config_error([] { parse_config("cutoff = 0\n"); }).key() == "cutoff");
    CHECK(config_error([] { parse_config("cutoff = 1.5\n"); }).key() == "cutoff");
  }
  SUBCASE("command line override") {
    ParsedConfig p = parse_config("trajectories = 10\n");
    apply_setting(p, "trajectories", "20");
    finalize_config(p);
    CHECK(p.config.evolution.n_trajectories == 20);
    CHECK_THROWS_AS(apply_setting(p, "dt", "-1"), ConfigError);
  }
}

TEST_CASE("series csv") {
  const fs::path dir = scratch_dir();

  SUBCASE("empty record is refused and leaves no file") {
    EvolutionRecord r;
    r.names = {"N_f"};
    r.values = {{}};
    const fs::path path = dir / "empty.csv";
    CHECK_THROWS(write_series_csv(r, path));
    CHECK_FALSE(fs::exists(path));
  }
  SUBCASE("one row gives header plus row") {
    EvolutionRecord r;
    r.times = {0.0};
    r.names = {"N_f", "p_e"};
    r.values = {{1.0}, {0.0}};
    const fs::path path = dir / "one.csv";
    write_series_csv(r, path);
    CHECK(slurp(path) == "tau,N_f,p_e\n0,1,0\n");
  }
  SUBCASE("round trip is exact") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    EvolutionRecord r;
    r.names = {"a", "b", "c"};
    r.values.assign(3, {});
    for (int i = 0; i < 50; ++i) {
      r.times.push_back(i * 0.1);
      for (auto& col : r.values) col.push_back(u(rng) * std::pow(10.0, i % 20 - 10));
    }
    r.values[0][3] = std::numbers::pi;
    r.values[1][4] = 1e-300;
    const fs::path path = dir / "rt.csv";
    write_series_csv(r, path);
    const CsvData data = read_csv(path);
    REQUIRE(data.header == std::vector<std::string>{"tau", "a", "b", "c"});
    REQUIRE(data.rows.size() == 50);
    for (std::size_t i = 0; i < 50; ++i) {
      CHECK(std::stod(data.rows[i][0]) == r.times[i]);
      for (std::size_t c = 0; c < 3; ++c) CHECK(std::stod(data.rows[i][c + 1]) == r.values[c][i]);
    }
  }
  SUBCASE("mcwf records carry standard errors") {
    EvolutionRecord r;
    r.times = {0.0, 1.0};
    r.names = {"p_e"};
    r.values = {{0.0, 0.5}};
    r.std_errors = {{0.0, 0.01}};
    const fs::path path = dir / "se.csv";
    write_series_csv(r, path);
    CHECK(read_csv(path).header == std::vector<std::string>{"tau", "p_e", "se_p_e"});
  }
  SUBCASE("unwritable path") {
    EvolutionRecord r;
    r.times = {0.0};
    r.names = {"p_e"};
    r.values = {{0.0}};
    CHECK_THROWS(write_series_csv(r, dir / "missing" / "x.csv"));
  }
  SUBCASE("table cells") {
    Table t{{"kind", "tau"}, {{std::string("atomic"), 2.5}, {std::string("cavity"), 1.0 / 3.0}}};
    const fs::path path = dir / "t.csv";
    write_table_csv(t, path);
    CHECK(slurp(path) == "kind,tau\natomic,2.5\ncavity,0.33333333333333331\n");
  }
  fs::remove_all(dir);
}

TEST_CASE("complex entries") {
  CHECK(parse_complex("0.5") == Complex(0.5, 0.0));
  CHECK(parse_complex("2j") == Complex(0.0, 2.0));
  CHECK(parse_complex("-j") == Complex(0.0, -1.0));
  CHECK(parse_complex("1+2j") == Complex(1.0, 2.0));
  CHECK(parse_complex("1-2i") == Complex(1.0, -2.0));
  CHECK(parse_complex("(1e-3-2.5e-1j)") == Complex(1e-3, -0.25));
  CHECK(parse_complex(" 3 ") == Complex(3.0, 0.0));
  CHECK_THROWS(parse_complex(""));
  CHECK_THROWS(parse_complex("1+"));
  CHECK_THROWS(parse_complex("abc"));

  const fs::path dir = scratch_dir();
  {
    std::ofstream f(dir / "m.csv");
    f << "0.5,0.1+0.2j\n0.1-0.2j,0.5\n";
  }
  const Matrix m = read_complex_matrix_csv(dir / "m.csv");
  REQUIRE(m.rows() == 2);
  CHECK(m(0, 1) == Complex(0.1, 0.2));
  CHECK(m(1, 0) == Complex(0.1, -0.2));
  {
    std::ofstream f(dir / "bad.csv");
    f << "1,0\n0\n";
  }
  CHECK_THROWS(read_complex_matrix_csv(dir / "bad.csv"));
  fs::remove_all(dir);
}
