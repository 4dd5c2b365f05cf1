#include <iostream>
#include <string>
#include <vector>

#include "analyze_rt/cli.hpp"

int main(int argc, char** argv) {
  analyze_rt::install_interrupt_handlers();
  std::vector<std::string> args(argv + 1, argv + argc);
  return analyze_rt::run_cli(args, std::cout, std::cerr);
}
