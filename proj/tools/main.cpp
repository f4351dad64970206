#include <string>
#include <vector>

#include "conceptlab/cli.hpp"

int main(int argc, char** argv) {
  return conceptlab::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
