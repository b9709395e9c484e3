#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

namespace sits::cli {

/// Flat key=value configuration. Precedence: flags > config file > defaults.
/// Unknown keys and malformed values are rejected naming the offending key.
struct RunConfig {
  std::string command;
  std::map<std::string, std::string> values;      // fully resolved
  std::set<std::string> provided;                 // keys set by file or flag

  const std::string& get(const std::string& key) const;
  bool was_provided(const std::string& key) const { return provided.count(key) > 0; }

  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;

  /// Registry-ordered echo, reproducing this run when fed back via --config.
  std::string echo() const;
};

/// Parses `<command> [--config file] [--key value | --key=value ...]`.
RunConfig parse_config(const std::vector<std::string>& args);

/// Runs a command and writes its artifacts under the configured output
/// directory. Partial outputs are removed when a step fails.
void dispatch(const RunConfig& cfg);

/// Full entry point: parses, dispatches, maps errors to stderr + exit code 1.
int run(const std::vector<std::string>& args);

}  // namespace sits::cli
