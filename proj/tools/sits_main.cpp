#include <string>
#include <vector>

#include "sits/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return sits::cli::run(args);
}
