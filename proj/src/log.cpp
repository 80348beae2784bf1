#include <mtac/log.hpp>

#include <atomic>
#include <iostream>
#include <mutex>

namespace mtac::log {

namespace {
std::atomic<Level> g_level{Level::kWarn};
std::mutex g_mutex;
constexpr const char* kNames[] = {"debug", "info", "warn", "error"};
}  // namespace

void set_level(Level level) { g_level.store(level); }
Level level() { return g_level.load(); }

void write(Level lvl, std::string_view message) {
  if (lvl < g_level.load() || lvl == Level::kOff) return;
  std::lock_guard<std::mutex> lock(g_mutex);
  std::cerr << "[mtac " << kNames[static_cast<int>(lvl)] << "] " << message << '\n';
}

}  // namespace mtac::log
