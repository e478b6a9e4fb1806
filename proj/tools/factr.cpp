#include <iostream>

#include "factr/cli/app.hpp"

int main(int argc, char** argv) { return factr::cli::run(argc, argv, std::cout, std::cerr); }
