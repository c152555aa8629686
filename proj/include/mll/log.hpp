#pragma once

#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace mll::log {

enum class Level : int { error = 0, warn = 1, info = 2, debug = 3 };

// Level parsed once from MLL_LOG (error|warn|info|debug); defaults to warn.
inline Level threshold() {
  static const Level lvl = [] {
    const char* env = std::getenv("MLL_LOG");
    if (env == nullptr) return Level::warn;
    if (std::strcmp(env, "error") == 0) return Level::error;
    if (std::strcmp(env, "warn") == 0) return Level::warn;
    if (std::strcmp(env, "info") == 0) return Level::info;
    if (std::strcmp(env, "debug") == 0) return Level::debug;
    return Level::warn;
  }();
  return lvl;
}

inline void vlogf(Level lvl, const char* tag, const char* fmt, std::va_list args) {
  if (static_cast<int>(lvl) > static_cast<int>(threshold())) return;
  std::fprintf(stderr, "[mll:%s] ", tag);
  std::vfprintf(stderr, fmt, args);
  std::fputc('\n', stderr);
}

#if defined(__GNUC__)
#define MLL_PRINTF_ATTR __attribute__((format(printf, 1, 2)))
#else
#define MLL_PRINTF_ATTR
#endif

inline void error(const char* fmt, ...) MLL_PRINTF_ATTR;
inline void warn(const char* fmt, ...) MLL_PRINTF_ATTR;
inline void info(const char* fmt, ...) MLL_PRINTF_ATTR;
inline void debug(const char* fmt, ...) MLL_PRINTF_ATTR;

inline void error(const char* fmt, ...) {
  std::va_list args;
  va_start(args, fmt);
  vlogf(Level::error, "error", fmt, args);
  va_end(args);
}

inline void warn(const char* fmt, ...) {
  std::va_list args;
  va_start(args, fmt);
  vlogf(Level::warn, "warn", fmt, args);
  va_end(args);
}

inline void info(const char* fmt, ...) {
  std::va_list args;
  va_start(args, fmt);
  vlogf(Level::info, "info", fmt, args);
  va_end(args);
}

inline void debug(const char* fmt, ...) {
  std::va_list args;
  va_start(args, fmt);
  vlogf(Level::debug, "debug", fmt, args);
  va_end(args);
}

#undef MLL_PRINTF_ATTR

}  // namespace mll::log
