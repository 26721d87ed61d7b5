// Copyright 2026 The trifuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <string>
#include <vector>

#include "trifuse/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return trifuse::run_cli(args, std::cout, std::cerr);
}
