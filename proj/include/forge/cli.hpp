#pragma once

namespace forge::cli {

// Entry point for the `forge` tool; returns the process exit code. Errors are
// printed to stderr as one-line JSON {"error":{"code","message"}}.
int run(int argc, const char* const* argv);

}  // namespace forge::cli
