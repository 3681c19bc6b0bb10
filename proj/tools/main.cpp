#include <iostream>

#include "scm/cli.hpp"

int main(int argc, char** argv) { return scm::run_cli(argc, argv, std::cout, std::cerr); }
