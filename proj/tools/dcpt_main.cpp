#include <iostream>

#include "dcpt/cli.hpp"

int main(int argc, char** argv) {
  return dcpt::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cerr);
}
