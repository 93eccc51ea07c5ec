#include <iostream>
#include <string>
#include <vector>

#include "xld/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return xld::run_cli(args, std::cout, std::cerr);
}
