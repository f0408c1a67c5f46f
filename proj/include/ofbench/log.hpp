#pragma once

// Structured lifecycle logging: one line per event,
//   <unix-ms> <level> <event> key=value ...
// Level threshold comes from OFBENCH_LOG (error|warn|info|debug), default warn.

#include <initializer_list>
#include <string>
#include <string_view>
#include <utility>

namespace ofb::log {

enum class Level : int { Error = 0, Warn = 1, Info = 2, Debug = 3 };

void set_level(Level level) noexcept;
[[nodiscard]] Level level() noexcept;
[[nodiscard]] inline bool enabled(Level l) noexcept { return static_cast<int>(l) <= static_cast<int>(level()); }

using Field = std::pair<std::string_view, std::string>;

void emit(Level level, std::string_view event, std::initializer_list<Field> fields = {});

inline void error(std::string_view event, std::initializer_list<Field> fields = {}) { emit(Level::Error, event, fields); }
inline void warn(std::string_view event, std::initializer_list<Field> fields = {}) { emit(Level::Warn, event, fields); }
inline void info(std::string_view event, std::initializer_list<Field> fields = {}) { emit(Level::Info, event, fields); }
inline void debug(std::string_view event, std::initializer_list<Field> fields = {}) { emit(Level::Debug, event, fields); }

}  // namespace ofb::log
