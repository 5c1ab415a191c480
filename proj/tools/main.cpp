#include <string>
#include <vector>

#include "noisyens/cli.hpp"

int main(int argc, char** argv) {
  return noisyens::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
