#pragma once

namespace unprm {

/// Entry point of the unprm command line. Returns the process exit code:
/// 0 success, 1 usage error, 2 provider error, 3 data error.
int run_cli(int argc, const char* const* argv);

}  // namespace unprm
