#include <iostream>

#include "deeptravel/cli.hpp"

int main(int argc, char** argv) { return deeptravel::run_cli(argc, argv, std::cout, std::cerr); }
