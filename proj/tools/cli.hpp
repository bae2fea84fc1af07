#pragma once

#include <ostream>

namespace kar::cli {

/// Entry point of the `kar` tool. Returns the process exit code; failures
/// print one "kar: error: ..." line to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace kar::cli
