#include <iostream>

#include "oba/cli.hpp"

int main(int argc, char** argv) { return oba::run_cli(argc, argv, std::cout, std::cerr); }
