#include <iostream>

#include "sinkprop_cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return sinkprop::cli::run(args, std::cout, std::cerr);
}
