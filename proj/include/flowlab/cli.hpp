#pragma once

#include <string>
#include <vector>

namespace flowlab {

// Entry point of the flowlab tool. Returns the process exit code:
// 0 ok, 2 invalid input or usage, 3 estimation failure, 4 I/O failure.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);  // args[0] is the program name

}  // namespace flowlab
