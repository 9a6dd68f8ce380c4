#include <iostream>

#include "apemkit/cli/commands.hpp"

int main(int argc, char** argv) { return apemkit::cli::run(argc, argv, std::cout, std::cerr); }
