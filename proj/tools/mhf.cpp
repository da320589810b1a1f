#include <iostream>
#include <string>
#include <vector>

#include "mhf/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return mhf::cli::run(args, std::cout, std::cerr);
}
