#include <string>
#include <vector>

#include "gpo/cli.hpp"

int main(int argc, char** argv) {
  return gpo::cli::dispatch(std::vector<std::string>(argv + 1, argv + argc));
}
