#include <string>
#include <vector>

#include "fdot/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return fdot::run_cli(args);
}
