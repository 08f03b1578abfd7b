// Copyright 2026 The tgazsr Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tgazsr/attention.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace tgazsr {

std::size_t grid_side(std::size_t num_patches) {
  auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(num_patches))));
  if (num_patches == 0 || side * side != num_patches) {
    throw Error(ErrorCode::shape_mismatch,
                "patch count " + std::to_string(num_patches) + " is not a perfect square");
  }
  return side;
}

Tensor bilinear_resize_matrix(std::size_t grid, OutputSize out) {
  if (grid == 0 || out.height == 0 || out.width == 0) {
    throw Error(ErrorCode::invalid_argument, "resize dimensions must be >= 1");
  }
  auto taps = [grid](std::size_t i, std::size_t n) {
    const double pos = n == 1 ? 0.0
                              : static_cast<double>(i) * static_cast<double>(grid - 1) /
                                    static_cast<double>(n - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    if (lo > grid - 1) lo = grid - 1;
    const std::size_t hi = std::min(lo + 1, grid - 1);
    return std::tuple{lo, hi, pos - static_cast<double>(lo)};
  };
  Tensor m(grid * grid, out.height * out.width);
  for (std::size_t i = 0; i < out.height; ++i) {
    auto [y0, y1, wy] = taps(i, out.height);
    for (std::size_t j = 0; j < out.width; ++j) {
      auto [x0, x1, wx] = taps(j, out.width);
      const std::size_t col = i * out.width + j;
      m(y0 * grid + x0, col) += (1.0 - wy) * (1.0 - wx);
      m(y0 * grid + x1, col) += (1.0 - wy) * wx;
      m(y1 * grid + x0, col) += wy * (1.0 - wx);
      m(y1 * grid + x1, col) += wy * wx;
    }
  }
  return m;
}

ad::Var resize_and_normalize(const ad::Var& raw, OutputSize out) {
  const std::size_t grid = grid_side(raw.cols());
  ad::Var resized = ad::matmul(raw, ad::constant(bilinear_resize_matrix(grid, out)));
  return ad::minmax_normalize_rows(resized);
}

ad::Var text_guided_attention(const ad::Var& patches, const ad::Var& text_per_sample,
                              OutputSize out) {
  return resize_and_normalize(ad::row_dot(patches, text_per_sample), out);
}

AttentionMap text_guided_attention(const Tensor& patches, const Tensor& text_per_sample,
                                   OutputSize out) {
  ad::NoGradGuard no_grad;
  ad::Var map = text_guided_attention(ad::constant(patches), ad::constant(text_per_sample), out);
  return {map.value(), out.height, out.width, AttentionSource::text_guided};
}

Tensor gradcam_weights(const ImageEncoder& encoder, const Tensor& pixels, const ImageShape& shape,
                       std::span<const int> labels, const TextEmbeddings& text,
                       double temperature) {
  // Pixels are tracked only so that a graph is recorded down to the activations.
  ad::Var input = ad::leaf(pixels, true);
  auto fwd = forward_tracked(encoder, input, shape, false);
  ad::Var logits = classification_logits(fwd.graph.pooled, text, temperature);
  Tensor onehot(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= onehot.cols) {
      throw Error(ErrorCode::label_out_of_range, "label " + std::to_string(labels[i]));
    }
    onehot(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  ad::sum_all(ad::mul(logits, ad::constant(std::move(onehot)))).backward();

  const Tensor grads = fwd.graph.activations.grad();
  const std::size_t n = labels.size();
  const std::size_t p = fwd.graph.num_patches;
  const std::size_t d = grads.cols;
  Tensor weights(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < p; ++t) {
      for (std::size_t c = 0; c < d; ++c) weights(i, c) += grads(i * p + t, c);
    }
    for (std::size_t c = 0; c < d; ++c) weights(i, c) /= static_cast<double>(p);
  }
  return weights;
}

ad::Var gradcam_map(const ad::Var& activations, const Tensor& weights, OutputSize out) {
  return resize_and_normalize(ad::relu(ad::row_dot(activations, ad::constant(weights))), out);
}

AttentionMap gradient_attention(const ImageEncoder& encoder, const ImageBatch& batch,
                                const TextEmbeddings& text, double temperature, OutputSize out) {
  batch.validate(text.num_classes());
  const Tensor weights =
      gradcam_weights(encoder, batch.pixels, batch.shape, batch.labels, text, temperature);
  ad::NoGradGuard no_grad;
  auto fwd = forward_tracked(encoder, ad::constant(batch.pixels), batch.shape, false);
  ad::Var map = gradcam_map(fwd.graph.activations, weights, out);
  return {map.value(), out.height, out.width, AttentionSource::gradient_based};
}

}  // namespace tgazsr
