// Copyright 2026 The tgazsr Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "tgazsr/tensor.hpp"

namespace tgazsr {

// On-disk tensor archive: a directory holding `index.json` and `data.bin`.
//
// index.json maps each tensor name to {"shape", "dtype", "offset"} and carries
// a free-form "meta" object. data.bin is the concatenation of every tensor as
// little-endian IEEE-754 binary32, row-major, at the recorded byte offsets.
// Values are narrowed to float on save, so a save/load/save cycle is
// bit-exact but a double-precision tensor loses its low bits once.
struct TensorArchive {
  std::map<std::string, Tensor> tensors;
  nlohmann::json meta = nlohmann::json::object();
};

inline constexpr const char* kArchiveIndex = "index.json";
inline constexpr const char* kArchiveBlob = "data.bin";

void save_archive(const std::filesystem::path& dir, const TensorArchive& archive);
TensorArchive load_archive(const std::filesystem::path& dir);

}  // namespace tgazsr
