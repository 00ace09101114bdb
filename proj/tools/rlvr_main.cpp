#include <iostream>

#include "rlvr/cli.hpp"

int main(int argc, char** argv) { return rlvr::cli::run(argc, argv, std::cout, std::cerr); }
