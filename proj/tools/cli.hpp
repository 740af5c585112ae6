#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace eqtrend::cli {

// Exit codes: 0 success, 1 unexpected failure, 2 validation, 3 I/O,
// 4 numerical (singular design, failed search).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace eqtrend::cli
