#include <iostream>

#include "nsds/cli.hpp"

int main(int argc, char** argv) { return nsds::cli::run(argc, argv, std::cout, std::cerr); }
