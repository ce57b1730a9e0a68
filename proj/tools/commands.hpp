#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace chembfn::cli {

// Exit codes: 0 success, 1 internal error, 2 usage, 3 input data,
// 4 configuration, 5 checkpoint.
enum ExitCode : int { kOk = 0, kInternal = 1, kUsage = 2, kData = 3, kConfig = 4, kCheckpoint = 5 };

// Parses `args` (without the program name) and runs one subcommand. Errors
// are reported on `err` as single-line JSON objects.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string git_describe();

}  // namespace chembfn::cli
