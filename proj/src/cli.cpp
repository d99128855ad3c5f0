#include "grd/cli.hpp"

#include <iostream>

namespace grd {

int cli_main(int, char**) {
    std::cerr << "not yet wired\n";
    return 1;
}

}  // namespace grd
