#pragma once

#include <array>
#include <filesystem>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cqedmap/experiments.hpp"

namespace cqedmap {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string source, int line, std::string key, const std::string& message);

  const std::string& source() const { return source_; }
  /// 0 when the setting did not come from a file line.
  int line() const { return line_; }
  const std::string& key() const { return key_; }

 private:
  std::string source_;
  int line_;
  std::string key_;
};

struct ParsedConfig {
  ScenarioConfig config;
  /// Keys given explicitly, in file order.
  std::vector<std::string> given;
  /// Raw initial-state keys; resolved into config.initial after every setting.
  std::string initial = "ghz";
  double werner_p = 0.0;
  std::array<double, 4> schmidt{std::numbers::sqrt2 / 2, 0.0, std::numbers::sqrt2 / 2, 0.0};

  bool has(std::string_view key) const;
};

/// Every recognised key.
const std::vector<std::string>& config_keys();

/// Flat `key = value` lines; `#` starts a comment. Throws ConfigError.
ParsedConfig parse_config(std::string_view text, std::string_view source = "<config>");
ParsedConfig load_config(const std::filesystem::path& path);

/// Applies one setting on top of `parsed` (command-line overrides); call
/// finalize_config afterwards.
void apply_setting(ParsedConfig& parsed, std::string_view key, std::string_view value,
                   std::string_view source = "<command line>", int line = 0);
/// Resolves the initial state from its keys and validates the result.
void finalize_config(ParsedConfig& parsed, std::string_view source = "<config>");

/// Full key/value listing of the effective configuration.
std::vector<std::pair<std::string, std::string>> config_echo(const ScenarioConfig& config);

/// 17 significant digits, locale free; reads back to the same double.
std::string format_number(double value);

/// Header `tau,<columns>` then one row per sample; MCWF records add `se_<column>`.
void write_series_csv(const EvolutionRecord& record, const std::filesystem::path& path);
void write_table_csv(const Table& table, const std::filesystem::path& path);

struct CsvData {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvData read_csv(const std::filesystem::path& path);

/// Parses `a`, `bj`, `a+bj` or `a-bj` (also with `i`).
Complex parse_complex(std::string_view text);

/// Square matrix of complex entries, one row per line, comma separated.
Matrix read_complex_matrix_csv(const std::filesystem::path& path);

}  // namespace cqedmap
