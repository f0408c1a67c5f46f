#include "ofbench/log.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <mutex>

namespace ofb::log {

namespace {

Level level_from_env() {
  const char* v = std::getenv("OFBENCH_LOG");
  if (v == nullptr) return Level::Warn;
  std::string_view s(v);
  if (s == "error") return Level::Error;
  if (s == "info") return Level::Info;
  if (s == "debug") return Level::Debug;
  return Level::Warn;
}

std::atomic<int>& current() {
  static std::atomic<int> lvl{static_cast<int>(level_from_env())};
  return lvl;
}

constexpr std::string_view name(Level l) {
  switch (l) {
    case Level::Error: return "error";
    case Level::Warn: return "warn";
    case Level::Info: return "info";
    case Level::Debug: return "debug";
  }
  return "?";
}

}  // namespace

void set_level(Level level) noexcept { current().store(static_cast<int>(level)); }
Level level() noexcept { return static_cast<Level>(current().load(std::memory_order_relaxed)); }

void emit(Level lvl, std::string_view event, std::initializer_list<Field> fields) {
  if (!enabled(lvl)) return;
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::system_clock::now().time_since_epoch())
                      .count();
  std::string line = std::to_string(ms);
  line += ' ';
  line += name(lvl);
  line += ' ';
  line += event;
  for (const auto& [k, v] : fields) {
    line += ' ';
    line += k;
    line += '=';
    line += v;
  }
  line += '\n';
  static std::mutex mu;
  std::lock_guard lock(mu);
  std::fputs(line.c_str(), stderr);
}

}  // namespace ofb::log
