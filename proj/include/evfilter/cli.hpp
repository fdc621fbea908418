#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace evf {

/// Runs one `evfilter` invocation. `args` excludes the program name.
/// Returns 0 on success, 1 on a usage error and 2 on a data error; a
/// successful subcommand writes one JSON summary line to `out`.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace evf
