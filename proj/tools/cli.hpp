#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace alp::cli
{

enum ExitCode
{
  exit_success = 0,
  exit_usage = 1,
  exit_data = 2,
  exit_numerical = 3,
};

// Runs the command line (args excludes the program name). Data goes to files,
// reports to `out`, diagnostics to `err`.
int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace alp::cli
