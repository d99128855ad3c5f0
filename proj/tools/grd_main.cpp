#include "grd/cli.hpp"

int main(int argc, char** argv) { return grd::cli_main(argc, argv); }
