#include <iostream>
#include <string>
#include <vector>

#include "dstreamon/cli/cli.hpp"
#include "dstreamon/net/socket.hpp"

int main(int argc, char** argv) {
  dstreamon::net::ignore_sigpipe();
  std::vector<std::string> args(argv + 1, argv + argc);
  return dstreamon::cli::run(args, std::cout, std::cerr);
}
