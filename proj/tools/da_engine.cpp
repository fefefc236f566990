#include <iostream>

#include "da/cli.hpp"

int main(int argc, char** argv) { return da::cli::main(argc, argv, std::cin, std::cout, std::cerr); }
