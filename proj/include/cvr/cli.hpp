#pragma once

#include <iosfwd>

namespace cvr::cli {

enum ExitCode : int {
    kOk = 0,
    kIoFailure = 1,
    kCheckFailed = 1,
    kValidationFailure = 2,
    kNumericalFailure = 3,
};

/// Entry point shared by the cvrnet executable and the tests. argv[0] is the
/// program name. Subcommands: generate, train, gradcheck, eval, ablate.
/// Every run that names an output also writes <out>.manifest.json.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace cvr::cli
