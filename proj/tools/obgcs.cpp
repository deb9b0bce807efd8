#include "obgcs/cli.hpp"

int main(int argc, char** argv) { return obgcs::cli::run_cli(argc, argv); }
