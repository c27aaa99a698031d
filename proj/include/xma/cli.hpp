#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace xma {

/// Entry point behind the `xma` binary. `args` excludes the program name.
/// Returns 0 on success, 1 for usage or validation errors, 2 for runtime
/// failures.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace xma
