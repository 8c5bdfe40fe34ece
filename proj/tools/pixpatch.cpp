#include "pixpatch/cli.hpp"

int main(int argc, char** argv) { return pixpatch::run_cli(argc, argv); }
