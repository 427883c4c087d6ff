#pragma once

#include <string>
#include <vector>

namespace gil {

/// Command-line entry point (datagen | plan | train | eval | probe | sweep
/// | report). Returns the process exit code: 0 success, 1 usage error,
/// 2 data/plan/checkpoint error.
int cli_dispatch(const std::vector<std::string>& args);

}  // namespace gil
