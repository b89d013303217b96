#include "fsnet/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return fsnet::cli_main(argc, argv, std::cout, std::cerr); }
