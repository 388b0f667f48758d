#pragma once

#include <cstdlib>
#include <memory>
#include <string>

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

namespace fastvis {

/// Process-wide logger on stderr. Verbosity comes from FAST_PIPELINE_LOG
/// (trace|debug|info|warn|error|critical|off); the default, also used for
/// unrecognized values, is warn.
inline spdlog::logger& logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto lg = spdlog::get("fastvis");
    if (!lg) lg = spdlog::stderr_logger_mt("fastvis");
    lg->set_pattern("[%Y-%m-%dT%H:%M:%S.%e] [%l] %v");
    auto level = spdlog::level::warn;
    if (const char* env = std::getenv("FAST_PIPELINE_LOG")) {
      const std::string name(env);
      const auto parsed = spdlog::level::from_str(name);
      if (parsed != spdlog::level::off || name == "off") level = parsed;
    }
    lg->set_level(level);
    return lg;
  }();
  return *instance;
}

}  // namespace fastvis
