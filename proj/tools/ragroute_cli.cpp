#include <iostream>

#include "ragroute/commands.hpp"

int main(int argc, char** argv) { return ragroute::run_cli(argc, argv, std::cout, std::cerr); }
