#include <iostream>

#include "dprm/cli.h"

int main(int argc, char** argv) {
  return dprm::cli::dispatch(argc, argv, std::cout, std::cerr);
}
