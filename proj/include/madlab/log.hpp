#pragma once

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string_view>

namespace madlab::log {

enum class Level { Error = 0, Info = 1, Debug = 2 };

// Level is read once from MADLAB_LOG={error|info|debug}; default info.
inline Level& threshold() {
  static Level level = [] {
    const char* env = std::getenv("MADLAB_LOG");
    if (env == nullptr) return Level::Info;
    std::string_view v{env};
    if (v == "error") return Level::Error;
    if (v == "debug") return Level::Debug;
    return Level::Info;
  }();
  return level;
}

inline int& warning_count() {
  static int count = 0;
  return count;
}

template <typename... Args>
void write(Level level, std::string_view tag, Args&&... args) {
  if (static_cast<int>(level) > static_cast<int>(threshold())) return;
  std::ostringstream oss;
  oss << "[madlab:" << tag << "] ";
  (oss << ... << std::forward<Args>(args));
  oss << '\n';
  std::cerr << oss.str();
}

template <typename... Args>
void error(Args&&... args) {
  write(Level::Error, "error", std::forward<Args>(args)...);
}

// Warnings are counted so tests can observe clamping/guard events.
template <typename... Args>
void warn(Args&&... args) {
  ++warning_count();
  write(Level::Info, "warn", std::forward<Args>(args)...);
}

template <typename... Args>
void info(Args&&... args) {
  write(Level::Info, "info", std::forward<Args>(args)...);
}

template <typename... Args>
void debug(Args&&... args) {
  write(Level::Debug, "debug", std::forward<Args>(args)...);
}

}  // namespace madlab::log
