#pragma once

#include <spdlog/spdlog.h>

namespace ejfat::log {

/// Applies the LB_LOG environment variable (trace, debug, info, warn, error,
/// critical, off) to the default logger. Defaults to info.
void init_from_env();

}  // namespace ejfat::log
