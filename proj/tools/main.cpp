#include <iostream>

#include "genhead/cli.hpp"

int main(int argc, char** argv) { return genhead::run_cli(argc, argv, std::cout, std::cerr); }
