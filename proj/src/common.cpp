#include "vnas/common.hpp"

#include <cstdlib>
#include <cstring>
#include <mutex>

namespace vnas {

LogLevel log_level() {
  static LogLevel lvl = [] {
    const char* e = std::getenv("VNAS_LOG_LEVEL");
    if (e == nullptr) return LogLevel::kWarn;
    if (std::strcmp(e, "error") == 0) return LogLevel::kError;
    if (std::strcmp(e, "warn") == 0) return LogLevel::kWarn;
    if (std::strcmp(e, "info") == 0) return LogLevel::kInfo;
    if (std::strcmp(e, "debug") == 0) return LogLevel::kDebug;
    std::fprintf(stderr, "[warn] unknown VNAS_LOG_LEVEL '%s', using warn\n", e);
    return LogLevel::kWarn;
  }();
  return lvl;
}

void log_msg(LogLevel lvl, const std::string& msg) {
  if (static_cast<int>(lvl) > static_cast<int>(log_level())) return;
  static const char* kNames[] = {"error", "warn", "info", "debug"};
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  std::fprintf(stderr, "[%s] %s\n", kNames[static_cast<int>(lvl)],
               msg.c_str());
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  VNAS_CHECK(!s.empty(), ValueError, "empty float literal");
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  VNAS_CHECK(end == s.c_str() + s.size(), ValueError,
             "bad float literal '" + s + "'");
  return v;
}

}  // namespace vnas
