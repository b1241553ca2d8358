#include "rdmm/log.hpp"

#include <cstdlib>
#include <memory>

#include <spdlog/sinks/stdout_sinks.h>

namespace rdmm::log {

spdlog::logger& logger() {
  static const std::shared_ptr<spdlog::logger> instance = [] {
    auto lg = std::make_shared<spdlog::logger>("rdmm",
                                               std::make_shared<spdlog::sinks::stderr_sink_mt>());
    lg->set_pattern("[%l] %v");
    lg->set_level(spdlog::level::warn);
    if (const char* env = std::getenv("RDMM_LOG")) lg->set_level(spdlog::level::from_str(env));
    return lg;
  }();
  return *instance;
}

}  // namespace rdmm::log
