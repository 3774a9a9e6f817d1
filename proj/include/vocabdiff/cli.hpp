#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace vocabdiff::cli {

// Exit codes: 0 success, 1 invalid input or usage, 2 internal failure.
// args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vocabdiff::cli
