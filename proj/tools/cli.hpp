#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace scalenet::cli {

// Runs the ecg_scalenet command line. args excludes the program name.
// Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string version();

}  // namespace scalenet::cli
