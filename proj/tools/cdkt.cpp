#include "cdkt_cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cdkt::cli::run_cli(std::move(args));
}
