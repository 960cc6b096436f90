#pragma once

namespace triage::cli {

// Full command-line entry point. Exit codes: 0 success, 1 runtime failure,
// 2 usage error.
int run(int argc, const char* const* argv);

}  // namespace triage::cli
