#include <iostream>
#include <string>
#include <vector>

#include "brushtrace/cli.h"

int main(int argc, char** argv) {
    const std::vector<std::string> args(argv, argv + argc);
    return brushtrace::run_cli(args, std::cout, std::cerr);
}
