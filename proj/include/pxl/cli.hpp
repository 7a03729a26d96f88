#pragma once

namespace pxl {

// The command-line entry point: gen-data, train, eval, bench, grad-check,
// ablate. Returns the process exit status; failures print one
// machine-parsable "error: ..." line on stderr.
int run_cli(int argc, const char* const* argv);

}  // namespace pxl
