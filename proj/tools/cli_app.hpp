#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace casbench::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kConfig = 3,
  kTransport = 4,
  kPartial = 5,
  kChecklist = 6,
};

// Runs one casbench invocation. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace casbench::cli
