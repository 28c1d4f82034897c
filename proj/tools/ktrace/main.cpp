#include <iostream>

#include "ktrace/commands.hpp"

int main(int argc, char** argv) { return ktrace::run(argc, argv, std::cout, std::cerr); }
