// SPDX-License-Identifier: Apache-2.0
//
// risloc — RIS-aided near-field localization and velocity estimation toolkit

#include <iostream>
#include <string>
#include <vector>

#include "risloc/cli.hpp"

int main(int argc, char **argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return risloc::run_cli(args, std::cout, std::cerr);
}
