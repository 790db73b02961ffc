#include <iostream>

#include "sna/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return sna::run_cli(args, std::cout, std::cerr);
}
