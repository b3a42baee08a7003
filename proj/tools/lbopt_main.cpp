#include <string>
#include <vector>

#include "lbopt/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return lbopt::cli::run(std::move(args));
}
