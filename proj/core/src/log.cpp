#include "kar/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace kar {

namespace {

std::mutex g_mutex;
LogSink g_sink;
std::atomic<LogLevel> g_level{LogLevel::kWarning};

std::string_view level_name(LogLevel level) {
  switch (level) {
    case LogLevel::kDebug: return "debug";
    case LogLevel::kInfo: return "info";
    case LogLevel::kWarning: return "warning";
    case LogLevel::kError: return "error";
  }
  return "?";
}

}  // namespace

void set_log_sink(LogSink sink) {
  std::lock_guard lock(g_mutex);
  g_sink = std::move(sink);
}

void set_log_level(LogLevel min_level) { g_level = min_level; }

void log(LogLevel level, std::string_view message) {
  std::lock_guard lock(g_mutex);
  if (g_sink) {
    g_sink(level, message);
    return;
  }
  if (level < g_level.load()) return;
  std::cerr << "[kar] " << level_name(level) << ": " << message << '\n';
}

}  // namespace kar
