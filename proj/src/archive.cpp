// Copyright 2026 The tgazsr Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tgazsr/archive.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

namespace tgazsr {
namespace {

void put_f32_le(std::vector<unsigned char>& out, double value) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(value));
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<unsigned char>(bits >> (8 * b)));
}

double get_f32_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(p[b]) << (8 * b);
  return static_cast<double>(std::bit_cast<float>(bits));
}

}  // namespace

void save_archive(const std::filesystem::path& dir, const TensorArchive& archive) {
  std::filesystem::create_directories(dir);
  nlohmann::json index;
  index["tensors"] = nlohmann::json::object();
  index["meta"] = archive.meta;
  std::vector<unsigned char> blob;
  for (const auto& [name, t] : archive.tensors) {
    index["tensors"][name] = {{"shape", {t.rows, t.cols}},
                              {"dtype", "float32"},
                              {"offset", blob.size()}};
    blob.reserve(blob.size() + 4 * t.size());
    for (double v : t.data) put_f32_le(blob, v);
  }
  std::ofstream idx(dir / kArchiveIndex, std::ios::binary | std::ios::trunc);
  std::ofstream bin(dir / kArchiveBlob, std::ios::binary | std::ios::trunc);
  if (!idx || !bin) throw Error(ErrorCode::io, "cannot write archive at " + dir.string());
  idx << index.dump(2) << '\n';
  bin.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  if (!idx || !bin) throw Error(ErrorCode::io, "short write to archive at " + dir.string());
}

TensorArchive load_archive(const std::filesystem::path& dir) {
  std::ifstream idx(dir / kArchiveIndex);
  if (!idx) throw Error(ErrorCode::missing_file, (dir / kArchiveIndex).string());
  std::ifstream bin(dir / kArchiveBlob, std::ios::binary);
  if (!bin) throw Error(ErrorCode::missing_file, (dir / kArchiveBlob).string());
  const std::vector<unsigned char> blob{std::istreambuf_iterator<char>(bin), {}};

  nlohmann::json index;
  try {
    index = nlohmann::json::parse(idx);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::io, "archive index: " + std::string(e.what()));
  }
  TensorArchive archive;
  if (index.contains("meta")) archive.meta = index["meta"];
  try {
    for (const auto& [name, entry] : index.at("tensors").items()) {
      if (entry.at("dtype").get<std::string>() != "float32") {
        throw Error(ErrorCode::io, "unsupported dtype for tensor " + name);
      }
      const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      std::size_t rows = 1, cols = 1;
      if (shape.size() == 1) {
        cols = shape[0];
      } else if (!shape.empty()) {
        rows = shape[0];
        for (std::size_t i = 1; i < shape.size(); ++i) cols *= shape[i];
      }
      const auto offset = entry.at("offset").get<std::size_t>();
      if (offset + 4 * rows * cols > blob.size()) {
        throw Error(ErrorCode::io, "tensor " + name + " extends past end of data.bin");
      }
      Tensor t(rows, cols);
      for (std::size_t i = 0; i < t.size(); ++i) t.data[i] = get_f32_le(blob.data() + offset + 4 * i);
      archive.tensors.emplace(name, std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::io, "archive index: " + std::string(e.what()));
  }
  return archive;
}

}  // namespace tgazsr
