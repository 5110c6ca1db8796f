#include "simdiff/log.hpp"

#include <iostream>
#include <mutex>

namespace simdiff::log {
namespace {

std::mutex g_mutex;
bool g_verbose = false;
Sink g_sink;

}  // namespace

void set_sink(Sink sink) {
    std::lock_guard lock(g_mutex);
    g_sink = std::move(sink);
}

void set_verbose(bool verbose) {
    std::lock_guard lock(g_mutex);
    g_verbose = verbose;
}

void emit(Level level, const std::string& msg) {
    std::lock_guard lock(g_mutex);
    if (g_sink) {
        g_sink(level, msg);
        return;
    }
    if (level == Level::warn || level == Level::error) {
        std::cerr << (level == Level::warn ? "warning: " : "error: ") << msg << '\n';
    } else if (g_verbose) {
        std::cerr << msg << '\n';
    }
}

}  // namespace simdiff::log
