#include <iostream>

#include "lmwt/cli.hpp"

int main(int argc, char** argv) {
  return lmwt::run_cli(argc, argv, std::cout, std::cerr);
}
