#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace lmplab {

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

/// Level comes from LMPLAB_LOG (error|warn|info|debug); default warn.
inline LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("LMPLAB_LOG");
    if (env == nullptr) return LogLevel::Warn;
    if (std::strcmp(env, "error") == 0) return LogLevel::Error;
    if (std::strcmp(env, "warn") == 0) return LogLevel::Warn;
    if (std::strcmp(env, "info") == 0) return LogLevel::Info;
    if (std::strcmp(env, "debug") == 0) return LogLevel::Debug;
    return LogLevel::Warn;
  }();
  return level;
}

template <typename... Args>
void log(LogLevel lvl, const char* fmt, Args... args) {
  if (lvl > log_level()) return;
  const char* tag = lvl == LogLevel::Error  ? "error"
                    : lvl == LogLevel::Warn ? "warn"
                    : lvl == LogLevel::Info ? "info"
                                            : "debug";
  std::fprintf(stderr, "[lmplab %s] ", tag);
  std::fprintf(stderr, fmt, args...);
  std::fprintf(stderr, "\n");
}

inline void log(LogLevel lvl, const char* msg) { log(lvl, "%s", msg); }

}  // namespace lmplab
