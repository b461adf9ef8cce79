#include <string>
#include <vector>

#include "drmpc/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return drmpc::cli_main(args);
}
