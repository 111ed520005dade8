#include <iostream>
#include <string>
#include <vector>

#include "glintkit/cli.h"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return glintkit::run_command(args, std::cout, std::cerr);
}
