#include "torus_sync/cli.hpp"

int main(int argc, char** argv) { return tsync::cli::cli_main(argc, argv); }
