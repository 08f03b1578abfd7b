// Copyright 2026 The tgazsr Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>

#include "tgazsr/model.hpp"

namespace tgazsr {

// 8-bit RGB (or gray/RGBA, converted) PNG -> channel-major values in [0,1].
// Returns a 1 x (3*H*W) tensor and writes the geometry into `shape`.
Tensor read_png_rgb(const std::filesystem::path& path, ImageShape& shape);

// Channel-major [0,1] pixels -> 8-bit RGB PNG.
void write_png_rgb(const std::filesystem::path& path, std::span<const double> pixels,
                   const ImageShape& shape);

// Row-major [0,1] values -> 8-bit grayscale PNG.
void write_png_gray(const std::filesystem::path& path, std::span<const double> values,
                    std::size_t height, std::size_t width);

}  // namespace tgazsr
