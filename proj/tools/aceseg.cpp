#include <iostream>
#include <string>
#include <vector>

#include "aceseg/cli/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return aceseg::run_cli(args, std::cout, std::cerr);
}
