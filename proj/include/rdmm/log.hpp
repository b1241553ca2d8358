#pragma once

#include <utility>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

// Thin logging front end.  Level comes from the RDMM_LOG environment variable
// (trace, debug, info, warn, error, off; default warn).  Output goes to stderr
// so reports written to stdout or files stay deterministic.
namespace rdmm::log {

spdlog::logger& logger();

template <typename... Args>
void debug(fmt::format_string<Args...> f, Args&&... args) {
  if (logger().should_log(spdlog::level::debug))
    logger().debug(fmt::format(f, std::forward<Args>(args)...));
}

template <typename... Args>
void info(fmt::format_string<Args...> f, Args&&... args) {
  if (logger().should_log(spdlog::level::info))
    logger().info(fmt::format(f, std::forward<Args>(args)...));
}

template <typename... Args>
void warn(fmt::format_string<Args...> f, Args&&... args) {
  if (logger().should_log(spdlog::level::warn))
    logger().warn(fmt::format(f, std::forward<Args>(args)...));
}

}  // namespace rdmm::log
