#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lrs {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
/// Bad config, flags, or input files.
inline constexpr int kExitInput = 1;
/// Numerical or runtime failure.
inline constexpr int kExitFailure = 2;

/// Runs one command line (without the program name). Subcommands:
/// gen, fit, fit-rank1, fit-dp, adapt, eval, sweep. Run with --help for flags.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace lrs
