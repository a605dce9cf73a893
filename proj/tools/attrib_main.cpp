#include <string>
#include <vector>

#include "attrib/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return attrib::cli_dispatch(args);
}
