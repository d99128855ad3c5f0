#pragma once

namespace grd {

/// Entry point behind the `grd` binary. Returns 0 on success, 1 on a usage
/// error, 2 on a runtime failure.
int cli_main(int argc, char** argv);

}  // namespace grd
