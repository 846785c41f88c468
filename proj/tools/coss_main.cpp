#include <iostream>
#include <string>
#include <vector>

#include "coss/run.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return coss::run_cli(args, std::cout, std::cerr);
}
