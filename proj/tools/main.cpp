#include <iostream>

#include "nwc/cli.hpp"

int main(int argc, char** argv) { return nwc::cli::run(argc, argv, std::cout, std::cerr); }
