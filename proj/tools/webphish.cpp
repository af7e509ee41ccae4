#include <string>
#include <vector>

#include "webphish/cli.hpp"

int main(int argc, char** argv) {
  return webphish::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
