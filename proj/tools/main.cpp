#include "ockd/cli.hpp"

int main(int argc, char** argv) { return ockd::cli_main(argc, argv); }
