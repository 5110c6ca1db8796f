#include <iostream>

#include "simdiff/cli.hpp"

int main(int argc, char** argv) { return simdiff::run_cli(argc, argv, std::cout, std::cerr); }
