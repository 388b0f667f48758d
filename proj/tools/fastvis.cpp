#include <iostream>

#include "fastvis/cli.hpp"

int main(int argc, char** argv) {
  return fastvis::cli::run_cli(argc, argv, std::cout, std::cerr);
}
