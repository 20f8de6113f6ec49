#include "tryon/common.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>

namespace tryon::log {

namespace {

Level parse_env() {
    const char* v = std::getenv("TRYON_LOG");
    if (!v) return Level::info;
    const std::string s(v);
    if (s == "quiet") return Level::quiet;
    if (s == "error") return Level::error;
    if (s == "warn") return Level::warn;
    if (s == "info") return Level::info;
    if (s == "debug") return Level::debug;
    return Level::info;
}

std::mutex& mu() {
    static std::mutex m;
    return m;
}

}  // namespace

Level level() {
    static const Level lv = parse_env();
    return lv;
}

void write(Level lv, const std::string& msg) {
    if (static_cast<int>(lv) > static_cast<int>(level())) return;
    static const char* names[] = {"", "error", "warn", "info", "debug"};
    std::lock_guard<std::mutex> lock(mu());
    std::cerr << "[" << names[static_cast<int>(lv)] << "] " << msg << "\n";
}

}  // namespace tryon::log
