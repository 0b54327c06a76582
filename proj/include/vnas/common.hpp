#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace vnas {

// Error taxonomy. Everything user-facing derives from Error so the CLI can
// map categories onto exit codes without string matching.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};
struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error("shape: " + msg) {}
};
struct ValueError : Error {
  explicit ValueError(const std::string& msg) : Error("value: " + msg) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error("config: " + msg) {}
};
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error("io: " + msg) {}
};
struct NameError : Error {
  explicit NameError(const std::string& msg) : Error("name: " + msg) {}
};
// Training blew up (non-finite loss); the CLI maps this to its own exit code
// so scripted sweeps can distinguish divergence from bad input.
struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error("numeric: " + msg) {}
};

#define VNAS_CHECK(cond, etype, msg)                 \
  do {                                               \
    if (!(cond)) throw ::vnas::etype(msg);           \
  } while (0)

// Logging: level comes from VNAS_LOG_LEVEL (error|warn|info|debug), default
// warn. Messages go to stderr so command output on stdout stays clean.
enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

LogLevel log_level();
void log_msg(LogLevel lvl, const std::string& msg);

inline void log_error(const std::string& m) { log_msg(LogLevel::kError, m); }
inline void log_warn(const std::string& m) { log_msg(LogLevel::kWarn, m); }
inline void log_info(const std::string& m) { log_msg(LogLevel::kInfo, m); }
inline void log_debug(const std::string& m) { log_msg(LogLevel::kDebug, m); }

// FNV-1a over raw bytes; used for dataset/content hashes where we need a
// stable, platform-independent digest rather than cryptographic strength.
std::uint64_t fnv1a(const void* data, std::size_t n,
                    std::uint64_t seed = 0xcbf29ce484222325ull);

// Shortest round-trip decimal for doubles ("%.17g" preserves every bit for
// IEEE754 binary64). All text serialization funnels through this.
std::string format_double(double v);
// Strict parse: whole string must be consumed.
double parse_double(const std::string& s);

}  // namespace vnas
