#include <iostream>
#include <string>
#include <vector>

#include "zsda/clirun.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return zsda::run_cli(args, std::cout, std::cerr);
}
