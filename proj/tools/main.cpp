// Copyright 2026 The tgazsr Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tgazsr/cli.hpp"

int main(int argc, char** argv) { return tgazsr::cli::run(argc, argv); }
