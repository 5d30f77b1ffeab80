#pragma once

// Scenario files, result tables and the `blora` command line.
//
// Scenario files are YAML with the sections of data/defaults.yaml; keys left
// out keep their default and unknown keys are an error. Relative scenario
// paths that do not exist as given are looked up in $BLORA_SCENARIO_DIR.

#include "blora/scenario.hpp"

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace blora {

inline constexpr const char* kScenarioDirEnv = "BLORA_SCENARIO_DIR";

/// Text of the shipped defaults file.
[[nodiscard]] std::string_view defaults_yaml();

/// The shipped defaults as a Scenario.
[[nodiscard]] const Scenario& default_scenario();

/// Parses YAML text over `base`. Throws ParseError (syntax, unknown key, bad
/// value; with the 1-based line) and InvalidScenario (failed validation).
[[nodiscard]] Scenario parse_scenario(std::string_view text, const Scenario& base);
[[nodiscard]] Scenario parse_scenario(std::string_view text);

[[nodiscard]] std::filesystem::path resolve_scenario_path(const std::filesystem::path& path);

/// Throws ParseError when the file cannot be read.
[[nodiscard]] Scenario load_scenario(const std::filesystem::path& path);

/// Full effective config; parse_scenario(dump_scenario(s)) == s.
[[nodiscard]] std::string dump_scenario(const Scenario& scenario);

// Fixed numeric formats for all outputs.
[[nodiscard]] std::string format_voltage(double v);     // %.6g
[[nodiscard]] std::string format_time(double t);        // %.9g
[[nodiscard]] std::string format_probability(double p); // %.6g

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Comma separated, LF line endings, header first.
void write_csv(std::ostream& out, const Table& table);

/// Array of objects keyed by the header; numeric cells become numbers and
/// empty cells null.
void write_json(std::ostream& out, const Table& table);

/// Runs one `blora` invocation (args exclude the program name). Returns the
/// process exit code: 0 ok, 1 runtime failure, 2 usage or validation error,
/// 3 infeasible scenario.
int run_command(std::span<const std::string> args, std::ostream& out, std::ostream& err);

} // namespace blora
