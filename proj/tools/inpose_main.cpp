// Copyright (C) 2026 The InPose Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) { return inpose::cli::run(argc, argv, std::cout, std::cerr); }
