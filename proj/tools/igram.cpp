#include <iostream>

#include "igram/cli.hpp"

int main(int argc, char** argv) { return igram::cli::dispatch(argc, argv, std::cout, std::cerr); }
