#include <iostream>

#include "app/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return flowrecon::app::run_cli(args, std::cout, std::cerr);
}
