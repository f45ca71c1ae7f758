#include <iostream>

#include "spliif/cli/commands.hpp"

int main(int argc, char** argv) { return spliif::cli::run(argc, argv, std::cout, std::cerr); }
