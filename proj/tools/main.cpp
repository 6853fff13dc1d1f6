#include <string>
#include <vector>

#include "cli.hpp"

int main(int argc, char** argv) {
  return phylocorr::cli::cli_main(std::vector<std::string>(argv, argv + argc));
}
