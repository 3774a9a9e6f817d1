#include <iostream>
#include <string>
#include <vector>

#include "vocabdiff/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return vocabdiff::cli::run(args, std::cout, std::cerr);
}
