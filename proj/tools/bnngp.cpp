#include "commands.hpp"

int main(int argc, char** argv) { return bnngp::cli::run_cli(argc, argv); }
