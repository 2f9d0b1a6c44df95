#include <iostream>
#include <string>
#include <vector>

#include "lr/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return lr::cli::dispatch(args, std::cout, std::cerr);
}
