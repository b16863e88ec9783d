#include <iostream>
#include <string>
#include <vector>

#include "causalcast/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return causalcast::run_cli(args, std::cout, std::cerr);
}
