#include "ejfat/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>

#include <cstdlib>
#include <string>

namespace ejfat::log {

void init_from_env() {
  // stdout carries the tools' JSON output.
  if (!spdlog::get("ejfat")) spdlog::set_default_logger(spdlog::stderr_color_mt("ejfat"));
  const char* env = std::getenv("LB_LOG");
  const std::string level = env ? env : "info";
  spdlog::set_level(spdlog::level::from_str(level));
  spdlog::set_pattern("%Y-%m-%dT%H:%M:%S.%e %^%l%$ %v");
}

}  // namespace ejfat::log
