#include <iostream>
#include <string>
#include <vector>

#include "neurolgp/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return neurolgp::run_cli(args, std::cout, std::cerr);
}
