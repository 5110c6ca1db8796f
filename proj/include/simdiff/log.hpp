#pragma once

#include <functional>
#include <string>

namespace simdiff::log {

enum class Level { debug, info, warn, error };

using Sink = std::function<void(Level, const std::string&)>;

// Default sink prints warn/error to stderr; info only when verbose.
void set_sink(Sink sink);
void set_verbose(bool verbose);
void emit(Level level, const std::string& msg);
inline void info(const std::string& msg) { emit(Level::info, msg); }
inline void warn(const std::string& msg) { emit(Level::warn, msg); }

}  // namespace simdiff::log
