#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace zsda {

/// Dispatches one CLI invocation (argv without the program name). Returns
/// the process exit code; on failure the first line written to `err` is
/// `error: <category>: <detail>`.
///
/// Exit codes: 0 success, 2 config-not-found, 3 config-invalid,
/// 4 io-error, 5 data-error, 6 usage-error, 10 internal-error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace zsda
