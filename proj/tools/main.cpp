#include <iostream>

#include "rsl/cli.hpp"

int main(int argc, char** argv) { return rsl::cli::run(argc, argv, std::cout, std::cerr); }
