#include <iostream>
#include <string>
#include <vector>

#include "knreader/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return knreader::cli::run(args, std::cout, std::cerr);
}
