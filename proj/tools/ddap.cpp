#include <iostream>
#include <string>
#include <vector>

#include "ddap/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return ddap::cli_run(args, std::cin, std::cout, std::cerr);
}
