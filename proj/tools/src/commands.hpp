#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace camaudit::cli {

enum ExitCode : int { kOk = 0, kFailed = 1, kConfig = 2, kIo = 3 };

/// Runs one `camaudit` invocation; args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace camaudit::cli
