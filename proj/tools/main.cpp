#include <iostream>

#include "fdn/cli.hpp"

int main(int argc, char** argv) { return fdn::run_cli(argc, argv, std::cout, std::cerr); }
