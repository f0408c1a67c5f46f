#pragma once

// Effective configuration shared by every subcommand.
//
// Sources, later ones winning field by field: built-in defaults, a config
// file, environment (OFBENCH_PORT, OFBENCH_CONTROLLER), command-line flags.
// The file format is one `key = value` per line; `#` starts a comment.
// Keys are the dotted names listed by `keys()`.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ofbench/bench.hpp"
#include "ofbench/engine.hpp"

namespace ofb::config {

struct Settings {
  engine::StrategyMatrix engine;
  bench::BenchConfig bench;

  std::optional<double> watts;
  std::string format = "csv";  // csv | json | text
  std::string mode = "auto";   // loopback | two-machine | auto

  bench::Axis axis = bench::Axis::None;
  std::vector<std::uint64_t> points;
  bool colocated = true;  // sweep spawns its own engine per point
};

/// Every recognised key, sorted.
[[nodiscard]] const std::vector<std::string>& keys();

/// Sets one field.  Throws engine::ConfigError for an unknown key or a bad value.
void apply(Settings& s, std::string_view key, std::string_view value);

/// Reads a config file.  Throws engine::ConfigError with the line number.
void load_file(Settings& s, const std::string& path);
void load_text(Settings& s, std::string_view text, std::string_view origin = "<text>");

void apply_env(Settings& s);

/// Current value of a key, in the form apply() accepts.
[[nodiscard]] std::string get(const Settings& s, std::string_view key);

/// Sorted `key=value` lines for every key.
[[nodiscard]] std::string canonical(const Settings& s);
/// FNV-1a 64 of canonical(), as 16 hex digits.
[[nodiscard]] std::string config_hash(const Settings& s);

/// "loopback" or "two-machine" once "auto" is resolved.
[[nodiscard]] std::string resolved_mode(const Settings& s, bool colocated_engine);

[[nodiscard]] std::vector<std::uint64_t> parse_points(std::string_view text);

}  // namespace ofb::config
