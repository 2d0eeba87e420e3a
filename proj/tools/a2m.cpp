#include <iostream>

#include "art2music/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return art2music::cli::run_cli(args, std::cout, std::cerr);
}
