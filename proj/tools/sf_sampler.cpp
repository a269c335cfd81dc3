#include "sfs/cli/commands.hpp"

int main(int argc, char** argv) { return sfs::cli::run_cli(argc, argv); }
