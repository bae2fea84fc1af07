#pragma once

#include <functional>
#include <string_view>

namespace kar {

enum class LogLevel { kDebug, kInfo, kWarning, kError };

using LogSink = std::function<void(LogLevel, std::string_view)>;

/// Replaces the process-wide sink (default: "[kar] <level>: <msg>" on
/// stderr for warning and above). Pass nullptr to restore the default.
void set_log_sink(LogSink sink);
void set_log_level(LogLevel min_level);

void log(LogLevel level, std::string_view message);
inline void log_info(std::string_view message) { log(LogLevel::kInfo, message); }
inline void log_warning(std::string_view message) { log(LogLevel::kWarning, message); }

}  // namespace kar
