#include "mvcc/cli.hpp"

int main(int argc, char** argv) { return mvcc::cli_main(argc, argv); }
