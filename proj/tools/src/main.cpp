#include <iostream>

#include "tki/cli.hpp"

int main(int argc, char** argv) { return tki::cli::run(argc, argv, std::cout, std::cerr); }
