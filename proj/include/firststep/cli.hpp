#pragma once

namespace firststep::cli {

// Full command dispatch: run | sample | guide | compare | report.
// Returns the process exit code (0 only when every problem was processed
// without backend errors).
int run_main(int argc, char** argv);

}  // namespace firststep::cli
