#pragma once

#include "json.hpp"

#include <iosfwd>
#include <string>

namespace tdbem {

enum class Command { Solve, CheckHypotheses, ErrorStudy, ProbeBounds };

std::string to_string(Command command);
Command parse_command(const std::string& name);

/// Parsed flat JSON scenario. `text` and `source` are kept so that errors
/// can point at the offending line.
struct ScenarioConfig {
  nlohmann::json values;
  std::string text;
  std::string source = "<config>";

  /// Line (1-based) where `key` first appears, 0 if absent.
  int line_of(const std::string& key) const;
  /// ConfigError message "source:line: message" anchored at `key`.
  [[noreturn]] void fail(const std::string& key, const std::string& message) const;
};

/// Throws ConfigError with the line of a syntax error or unknown key.
ScenarioConfig parse_config(const std::string& text, const std::string& source = "<config>");
ScenarioConfig load_config(const std::string& path);

struct RunOptions {
  std::string out_dir;  // overrides the config's output_dir when non-empty
  bool quiet = false;
};

/// Runs one command and writes its artifacts. Returns the process exit code:
/// 0 on success, 2 for configuration errors, 3 for numerical failures.
int run_scenario(const ScenarioConfig& config, Command command, const RunOptions& options, std::ostream& log);

/// Same as run_scenario but lets exceptions escape and returns the report.
nlohmann::json execute(const ScenarioConfig& config, Command command, const std::string& out_dir, std::ostream* log);

}  // namespace tdbem
