#include "cqedmap/io.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace cqedmap {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

bool parse_double(std::string_view text, double& out) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, out);
  return res.ec == std::errc{} && res.ptr == end && !text.empty();
}

struct Setter {
  std::string_view key;
  std::string_view value;
  std::string source;
  int line;

  [[noreturn]] void fail(const std::string& message) const {
    throw ConfigError(source, line, std::string(key), message);
  }

  double number() const {
    double v = 0.0;
    if (!parse_double(value, v) || !std::isfinite(v)) fail("expected a number, got '" + std::string(value) + "'");
    return v;
  }

  double at_least(double lo, bool strict) const {
    const double v = number();
    if (strict ? !(v > lo) : !(v >= lo)) {
      fail("value " + std::string(value) + " out of range (must be " + (strict ? "> " : ">= ") + format_number(lo) +
           ")");
    }
    return v;
  }

  double within(double lo, double hi) const {
    const double v = number();
    if (!(v >= lo && v <= hi)) {
      fail("value " + std::string(value) + " out of range [" + format_number(lo) + ", " + format_number(hi) + "]");
    }
    return v;
  }

  long integer(long lo) const {
    const double v = number();
    if (v != std::floor(v) || std::abs(v) > 9.0e15) fail("expected an integer, got '" + std::string(value) + "'");
    if (v < static_cast<double>(lo)) {
      fail("value " + std::string(value) + " out of range (must be >= " + std::to_string(lo) + ")");
    }
    return static_cast<long>(v);
  }

  std::vector<double> list(const std::function<bool(double)>& ok, const char* range) const {
    std::vector<double> out;
    if (trim(value).empty()) return out;
    for (auto item : split(value, ',')) {
      double v = 0.0;
      if (!parse_double(item, v) || !std::isfinite(v)) fail("expected a comma-separated list of numbers");
      if (!ok(v)) fail("list entry " + std::string(item) + " out of range " + range);
      out.push_back(v);
    }
    return out;
  }
};

using Handler = std::function<void(ParsedConfig&, const Setter&)>;

const std::map<std::string, Handler, std::less<>>& handlers() {
  static const std::map<std::string, Handler, std::less<>> h = [] {
    std::map<std::string, Handler, std::less<>> m;
    m["g_b"] = [](ParsedConfig& p, const Setter& s) { p.config.base.g[1] = s.at_least(0.0, false); };
    m["g_c"] = [](ParsedConfig& p, const Setter& s) { p.config.base.g[2] = s.at_least(0.0, false); };
    m["nu_offdiag"] = [](ParsedConfig& p, const Setter& s) {
      const double v = s.at_least(0.0, false);
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k)
          if (j != k) p.config.base.nu[j][k] = v;
    };
    m["kappa_c"] = [](ParsedConfig& p, const Setter& s) { p.config.base.kappa_c = s.at_least(0.0, false); };
    m["kappa_f"] = [](ParsedConfig& p, const Setter& s) { p.config.base.kappa_f = s.at_least(0.0, false); };
    m["gamma_a"] = [](ParsedConfig& p, const Setter& s) { p.config.base.gamma_a = s.at_least(0.0, false); };
    m["nbar"] = [](ParsedConfig& p, const Setter& s) { p.config.base.nbar = s.at_least(0.0, false); };
    m["tau_off"] = [](ParsedConfig& p, const Setter& s) { p.config.base.tau_off = s.at_least(0.0, true); };
    m["switch_off_policy"] = [](ParsedConfig& p, const Setter& s) {
      const auto policy = parse_switch_off_policy(trim(s.value));
      if (!policy) s.fail("expected one of fixed, max_pe, min_nf, max_nc");
      p.config.switch_off_policy = *policy;
    };
    m["cutoff"] = [](ParsedConfig& p, const Setter& s) { p.config.base.cutoff = static_cast<int>(s.integer(1)); };
    m["dt"] = [](ParsedConfig& p, const Setter& s) { p.config.dt = s.at_least(0.0, true); };
    m["t_end"] = [](ParsedConfig& p, const Setter& s) { p.config.t_end = s.at_least(0.0, true); };
    m["sample_every"] = [](ParsedConfig& p, const Setter& s) {
      p.config.sample_every = static_cast<int>(s.integer(1));
    };
    m["method"] = [](ParsedConfig& p, const Setter& s) {
      const auto method = parse_method(trim(s.value));
      if (!method) s.fail("expected one of schrodinger, master, mcwf");
      p.config.evolution.method = *method;
    };
    m["trajectories"] = [](ParsedConfig& p, const Setter& s) {
      p.config.evolution.n_trajectories = static_cast<int>(s.integer(1));
    };
    m["seed"] = [](ParsedConfig& p, const Setter& s) {
      const std::string_view v = trim(s.value);
      std::uint64_t seed = 0;
      const auto res = std::from_chars(v.data(), v.data() + v.size(), seed);
      if (res.ec != std::errc{} || res.ptr != v.data() + v.size() || v.empty()) {
        s.fail("expected a non-negative integer, got '" + std::string(s.value) + "'");
      }
      p.config.evolution.seed = seed;
    };
    m["initial"] = [](ParsedConfig& p, const Setter& s) {
      const std::string v(trim(s.value));
      if (v != "ghz" && v != "werner" && v != "schmidt") s.fail("expected one of ghz, werner, schmidt");
      p.initial = v;
    };
    m["werner_p"] = [](ParsedConfig& p, const Setter& s) { p.werner_p = s.within(0.0, 1.0); };
    const char* parts[4] = {"schmidt_c0_re", "schmidt_c0_im", "schmidt_c1_re", "schmidt_c1_im"};
    for (int i = 0; i < 4; ++i) {
      m[parts[i]] = [i](ParsedConfig& p, const Setter& s) { p.schmidt[static_cast<std::size_t>(i)] = s.number(); };
    }
    m["p_list"] = [](ParsedConfig& p, const Setter& s) {
      p.config.p_list = s.list([](double v) { return v >= 0.0 && v <= 1.0; }, "[0, 1]");
    };
    m["kappa_list"] = [](ParsedConfig& p, const Setter& s) {
      p.config.kappa_list = s.list([](double v) { return v > 0.0; }, "(0, inf)");
    };
    m["nu_list"] = [](ParsedConfig& p, const Setter& s) {
      p.config.nu_list = s.list([](double v) { return v >= 0.0; }, "[0, inf)");
    };
    m["delta_list"] = [](ParsedConfig& p, const Setter& s) {
      p.config.delta_list = s.list([](double v) { return v > -1.0 && v < 1.0; }, "(-1, 1)");
    };
    m["anchor_list"] = [](ParsedConfig& p, const Setter& s) {
      p.config.anchor_list = s.list([](double v) { return v > 0.0; }, "(0, inf)");
    };
    return m;
  }();
  return h;
}

void resolve_initial(ParsedConfig& p, const std::string& source) {
  const bool has_p = p.has("werner_p");
  const bool has_schmidt = p.has("schmidt_c0_re") || p.has("schmidt_c0_im") || p.has("schmidt_c1_re") ||
                           p.has("schmidt_c1_im");
  std::string kind = p.initial;
  if (!p.has("initial")) kind = has_p ? "werner" : has_schmidt ? "schmidt" : "ghz";
  auto fail = [&](const char* key, const std::string& m) { throw ConfigError(source, 0, key, m); };
  if (has_p && kind != "werner") fail("werner_p", "given but initial is " + kind);
  if (has_schmidt && kind != "schmidt") fail("initial", "schmidt amplitudes given but initial is " + kind);
  if (kind == "ghz") {
    p.config.initial = InitialStateSpec::ghz();
  } else if (kind == "werner") {
    p.config.initial = InitialStateSpec::werner(p.werner_p);
  } else {
    const Complex c0(p.schmidt[0], p.schmidt[1]);
    const Complex c1(p.schmidt[2], p.schmidt[3]);
    const double n = std::sqrt(std::norm(c0) + std::norm(c1));
    if (std::abs(n - 1.0) > 1e-6) fail("schmidt_c0_re", "schmidt amplitudes are not normalised (norm " + format_number(n) + ")");
    p.config.initial = InitialStateSpec::schmidt(c0 / n, c1 / n);
  }
}

std::string list_text(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_number(v[i]);
  return out;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  return f;
}

std::string cell_text(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) return format_number(*d);
  return std::get<std::string>(c);
}

}  // namespace

ConfigError::ConfigError(std::string source, int line, std::string key, const std::string& message)
    : std::runtime_error(source + (line > 0 ? ":" + std::to_string(line) : std::string()) +
                         (key.empty() ? std::string() : ": key '" + key + "'") + ": " + message),
      source_(std::move(source)),
      line_(line),
      key_(std::move(key)) {}

bool ParsedConfig::has(std::string_view key) const {
  return std::find(given.begin(), given.end(), key) != given.end();
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, _] : handlers()) k.push_back(name);
    return k;
  }();
  return keys;
}

void apply_setting(ParsedConfig& parsed, std::string_view key, std::string_view value, std::string_view source,
                   int line) {
  const auto it = handlers().find(key);
  if (it == handlers().end()) throw ConfigError(std::string(source), line, std::string(key), "unknown key");
  it->second(parsed, Setter{key, value, std::string(source), line});
  if (!parsed.has(key)) parsed.given.emplace_back(key);
}

void finalize_config(ParsedConfig& parsed, std::string_view source) {
  resolve_initial(parsed, std::string(source));
  try {
    parsed.config.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string(source), 0, "", e.what());
  }
}

ParsedConfig parse_config(std::string_view text, std::string_view source) {
  ParsedConfig p;
  std::vector<std::string> unknown;
  int line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(std::string(source), line_no, std::string(line), "malformed line (expected key = value)");
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (handlers().find(key) == handlers().end()) {
      unknown.emplace_back(std::string(key) + " (line " + std::to_string(line_no) + ")");
      continue;
    }
    if (p.has(key)) throw ConfigError(std::string(source), line_no, std::string(key), "duplicate key");
    apply_setting(p, key, value, source, line_no);
  }
  if (!unknown.empty()) {
    std::string list;
    for (const auto& u : unknown) list += (list.empty() ? "" : ", ") + u;
    throw ConfigError(std::string(source), 0, "", "unknown keys: " + list);
  }
  finalize_config(p, source);
  return p;
}

ParsedConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError(path.string(), 0, "", "cannot open config file");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::vector<std::pair<std::string, std::string>> config_echo(const ScenarioConfig& c) {
  std::vector<std::pair<std::string, std::string>> out;
  auto add = [&](const char* k, std::string v) { out.emplace_back(k, std::move(v)); };
  const ModelParams& b = c.base;
  add("g_b", format_number(b.g[1]));
  add("g_c", format_number(b.g[2]));
  add("nu_offdiag", format_number(b.nu[0][1]));
  add("kappa_c", format_number(b.kappa_c));
  add("kappa_f", format_number(b.kappa_f));
  add("gamma_a", format_number(b.gamma_a));
  add("nbar", format_number(b.nbar));
  add("tau_off", format_number(b.tau_off));
  add("switch_off_policy", std::string(to_string(c.switch_off_policy)));
  add("cutoff", std::to_string(b.cutoff));
  add("dt", format_number(c.dt));
  add("t_end", c.t_end ? format_number(*c.t_end) : std::string("default"));
  add("sample_every", std::to_string(c.sample_every));
  add("method", std::string(to_string(c.evolution.method)));
  add("trajectories", std::to_string(c.evolution.n_trajectories));
  add("seed", std::to_string(c.evolution.seed));
  if (const auto* w = std::get_if<InitialStateSpec::Werner>(&c.initial.variant)) {
    add("initial", "werner");
    add("werner_p", format_number(w->p));
  } else {
    const auto [c0, c1] = c.initial.reference();
    add("initial", "schmidt");
    add("schmidt_c0_re", format_number(c0.real()));
    add("schmidt_c0_im", format_number(c0.imag()));
    add("schmidt_c1_re", format_number(c1.real()));
    add("schmidt_c1_im", format_number(c1.imag()));
  }
  add("p_list", list_text(c.p_list));
  add("kappa_list", list_text(c.kappa_list));
  add("nu_list", list_text(c.nu_list));
  add("delta_list", list_text(c.delta_list));
  add("anchor_list", list_text(c.anchor_list));
  return out;
}

std::string format_number(double value) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value, std::chars_format::general, 17);
  return std::string(buf.data(), res.ptr);
}

void write_series_csv(const EvolutionRecord& r, const std::filesystem::path& path) {
  if (r.size() == 0) throw std::invalid_argument("write_series_csv: empty record");
  const bool se = !r.std_errors.empty();
  std::string out = "tau";
  for (const auto& n : r.names) out += "," + n;
  if (se) {
    for (const auto& n : r.names) out += ",se_" + n;
  }
  out += '\n';
  for (std::size_t k = 0; k < r.size(); ++k) {
    out += format_number(r.times[k]);
    for (const auto& col : r.values) out += "," + format_number(col[k]);
    if (se) {
      for (const auto& col : r.std_errors) out += "," + format_number(col[k]);
    }
    out += '\n';
  }
  auto f = open_for_write(path);
  f << out;
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

void write_table_csv(const Table& t, const std::filesystem::path& path) {
  std::string out;
  for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + t.columns[i];
  out += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + cell_text(row[i]);
    out += '\n';
  }
  auto f = open_for_write(path);
  f << out;
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

CsvData read_csv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  CsvData d;
  bool first = true;
  for (std::string line; std::getline(f, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    for (auto c : split(line, ',')) cells.emplace_back(c);
    if (first) {
      d.header = std::move(cells);
      first = false;
    } else {
      d.rows.push_back(std::move(cells));
    }
  }
  return d;
}

Complex parse_complex(std::string_view text) {
  std::string_view s = trim(text);
  auto bad = [&] { return std::invalid_argument("cannot parse complex number '" + std::string(text) + "'"); };
  if (s.empty()) throw bad();
  if (s.front() == '(' && s.back() == ')') s = trim(s.substr(1, s.size() - 2));
  double re = 0.0, im = 0.0;
  if (s.back() == 'j' || s.back() == 'i') {
    s.remove_suffix(1);
    // Split before the last sign that is not an exponent sign.
    std::size_t cut = std::string_view::npos;
    for (std::size_t i = s.size(); i-- > 1;) {
      if ((s[i] == '+' || s[i] == '-') && s[i - 1] != 'e' && s[i - 1] != 'E') {
        cut = i;
        break;
      }
    }
    std::string_view imag = cut == std::string_view::npos ? s : s.substr(cut);
    if (imag == "+" || imag == "-" || imag.empty()) {
      im = imag == "-" ? -1.0 : 1.0;
    } else if (!parse_double(imag, im)) {
      throw bad();
    }
    if (cut != std::string_view::npos && !parse_double(s.substr(0, cut), re)) throw bad();
  } else if (!parse_double(s, re)) {
    throw bad();
  }
  return {re, im};
}

Matrix read_complex_matrix_csv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::vector<Complex>> rows;
  int line_no = 0;
  for (std::string line; std::getline(f, line);) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    std::vector<Complex> row;
    for (auto cell : split(line, ',')) {
      try {
        row.push_back(parse_complex(cell));
      } catch (const std::invalid_argument& e) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    rows.push_back(std::move(row));
  }
  const std::size_t n = rows.size();
  if (n == 0) throw std::runtime_error(path.string() + ": empty matrix");
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].size() != n) throw std::runtime_error(path.string() + ": matrix is not square");
    for (std::size_t j = 0; j < n; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return m;
}

}  // namespace cqedmap
