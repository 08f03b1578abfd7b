// Copyright 2026 The tgazsr Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tgazsr/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace tgazsr {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_png(const std::filesystem::path& path, const std::vector<unsigned char>& bytes,
               std::size_t height, std::size_t width, int color_type, std::size_t channels) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw Error(ErrorCode::io, "cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::io, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::io, "failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < height; ++y) {
    png_write_row(png, bytes.data() + y * width * channels);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Tensor read_png_rgb(const std::filesystem::path& path, ImageShape& shape) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw Error(ErrorCode::missing_file, path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::io, "libpng initialisation failed");
  }
  std::vector<unsigned char> bytes;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::io, "failed reading " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const std::size_t width = png_get_image_width(png, info);
  const std::size_t height = png_get_image_height(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  if (rowbytes != width * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::io, "unexpected PNG layout in " + path.string());
  }
  bytes.resize(height * rowbytes);
  std::vector<png_bytep> rows(height);
  for (std::size_t y = 0; y < height; ++y) rows[y] = bytes.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  shape = ImageShape{3, height, width};
  Tensor out(1, shape.size());
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        out.data[(c * height + y) * width + x] = bytes[(y * width + x) * 3 + c] / 255.0;
      }
    }
  }
  return out;
}

void write_png_rgb(const std::filesystem::path& path, std::span<const double> pixels,
                   const ImageShape& shape) {
  if (shape.channels != 3 || pixels.size() != shape.size()) {
    throw Error(ErrorCode::shape_mismatch, "write_png_rgb expects 3-channel pixels");
  }
  const std::size_t h = shape.height, w = shape.width;
  std::vector<unsigned char> bytes(h * w * 3);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        bytes[(y * w + x) * 3 + c] = to_byte(pixels[(c * h + y) * w + x]);
      }
    }
  }
  write_png(path, bytes, h, w, PNG_COLOR_TYPE_RGB, 3);
}

void write_png_gray(const std::filesystem::path& path, std::span<const double> values,
                    std::size_t height, std::size_t width) {
  if (values.size() != height * width) {
    throw Error(ErrorCode::shape_mismatch, "write_png_gray: value count");
  }
  std::vector<unsigned char> bytes(values.size());
  std::transform(values.begin(), values.end(), bytes.begin(), to_byte);
  write_png(path, bytes, height, width, PNG_COLOR_TYPE_GRAY, 1);
}

}  // namespace tgazsr
