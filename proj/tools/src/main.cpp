#include <iostream>

#include "brainseg_cli/app.hpp"

int main(int argc, char** argv) { return brainseg::cli::run(argc, argv, std::cout, std::cerr); }
