#include <iostream>

#include "cvr/cli.hpp"

int main(int argc, char** argv) { return cvr::cli::run(argc, argv, std::cout, std::cerr); }
