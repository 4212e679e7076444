#include <iostream>

#include "augkit/cli.hpp"

int main(int argc, char** argv) {
  return augkit::cli::run_cli(argc, argv, std::cout, std::cerr);
}
