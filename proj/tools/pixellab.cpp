#include "pxl/cli.hpp"

int main(int argc, char** argv) { return pxl::run_cli(argc, argv); }
