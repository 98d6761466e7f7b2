#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace zero_tta {

/// Entry point of the zero_tta tool. `args` excludes the program name.
/// Returns the process exit code.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace zero_tta
