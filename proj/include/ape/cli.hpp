#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ape {

// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,    // bad flags or configuration
  kExitData = 2,     // unreadable or inconsistent input, vocabulary or checkpoint
  kExitNumeric = 3,  // non-finite loss or gradient
};

// Subcommands: train, postedit, eval, align, gen, vocab. Errors are reported
// as one line on `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace ape
