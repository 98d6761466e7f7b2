#include <iostream>
#include <string>
#include <vector>

#include "zero_tta/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return zero_tta::cli_main(args, std::cout, std::cerr);
}
