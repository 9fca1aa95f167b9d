#include <iostream>

#include "prefrank/cli.hpp"

int main(int argc, char** argv) {
  return prefrank::run_cli(argc, argv, std::cout, std::cerr);
}
