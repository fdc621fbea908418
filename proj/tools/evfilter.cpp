#include <iostream>

#include "evfilter/cli.hpp"

int main(int argc, char** argv) { return evf::run_cli(argc, argv, std::cout, std::cerr); }
