#include <iostream>

#include "invstop/cli.hpp"

int main(int argc, char** argv) { return invstop::run_cli(argc, argv, std::cout, std::cerr); }
