// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "uniat/cli/commands.hpp"

int main(int argc, char** argv) { return uniat::cli::run_cli(argc, argv, std::cout, std::cerr); }
