#include <iostream>

#include "simnet/cli.hpp"

int main(int argc, char** argv) { return simnet::run_cli(argc, argv, std::cout, std::cerr); }
