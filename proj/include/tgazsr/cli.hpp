// Copyright 2026 The tgazsr Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "tgazsr/data.hpp"

namespace tgazsr::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kRuntimeError = 3 };

// Fully populated run configuration with every default spelled out.
nlohmann::json default_run_config();

// Reads a JSON config file and merges it over the defaults. A missing or
// unparsable file is a config error.
nlohmann::json load_run_config(const std::filesystem::path& path);

// Applies "a.b.c=value". The value is parsed as JSON when possible and kept
// as a string otherwise.
void apply_override(nlohmann::json& config, const std::string& assignment);

// "1/255" or "0.0039" -> double.
double parse_number(const std::string& text);
std::vector<double> parse_number_list(const std::string& text);

// A manifest path, or "shapes:<n>:<seed>[:<classes>[:<first>]]" for the
// synthetic task.
Dataset load_dataset_spec(const std::string& spec);

// Creates <root>/<YYYYmmdd-HHMMSS>-<hash>, adding -1, -2, ... on collision.
std::filesystem::path make_run_dir(const std::filesystem::path& root, const std::string& hash);

int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace tgazsr::cli
