#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lics {

/// Subcommands: worldgen, record, train, eval, safety-check, teleop.
/// Returns 0 on success, 1 on runtime failure, 2 on usage errors.
int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
            std::ostream& err);

int run_cli(int argc, char** argv);

}  // namespace lics
