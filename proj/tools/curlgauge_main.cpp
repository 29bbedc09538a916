// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <string>
#include <vector>

#include "curlgauge/report.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return curlgauge::run_command(args, std::cout, std::cerr);
}
