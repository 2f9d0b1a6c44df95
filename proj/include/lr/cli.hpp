#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lr::cli {

inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;
inline constexpr int kUnknownCommand = 2;
inline constexpr int kInvalidConfig = 3;
inline constexpr int kIoFailure = 4;

// args[0] is the command (gen-data, train-support, train, eval, report).
// On success one JSON line summarizing the artifacts goes to `out`; on
// failure one JSON line {"status", "error", "message"} goes to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lr::cli
