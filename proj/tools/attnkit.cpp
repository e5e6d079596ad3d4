#include <iostream>
#include <string>
#include <vector>

#include "attnkit/cli.hpp"

int main(int argc, char** argv) {
    const std::vector<std::string> args(argv + 1, argv + argc);
    return attnkit::cli::dispatch(args, std::cout, std::cerr);
}
