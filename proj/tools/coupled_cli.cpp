#include <iostream>

#include "coupled/commands.hpp"

int main(int argc, char** argv) { return coupled::run_cli(argc, argv, std::cout, std::cerr); }
