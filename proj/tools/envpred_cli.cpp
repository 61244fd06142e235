#include <string>
#include <vector>

#include "envpred/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return envpred::cli_run(args);
}
