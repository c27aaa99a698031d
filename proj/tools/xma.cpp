#include <iostream>

#include "xma/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return xma::run_cli(args, std::cout, std::cerr);
}
