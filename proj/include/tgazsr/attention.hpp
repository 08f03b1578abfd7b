// Copyright 2026 The tgazsr Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "tgazsr/autograd.hpp"
#include "tgazsr/model.hpp"

namespace tgazsr {

enum class AttentionSource { text_guided, gradient_based };

struct OutputSize {
  std::size_t height = 0;
  std::size_t width = 0;
};

// Per-sample spatial attention, one row of height*width values per sample.
struct AttentionMap {
  Tensor values;
  std::size_t height = 0;
  std::size_t width = 0;
  AttentionSource source = AttentionSource::text_guided;
};

// Side length of the square patch grid; throws if num_patches is not square.
std::size_t grid_side(std::size_t num_patches);

// Corner-aligned bilinear interpolation as a (grid*grid) x (H*W) matrix, so
// that resize(raw) = raw * M for raw laid out as one grid per row.
Tensor bilinear_resize_matrix(std::size_t grid, OutputSize out);

// Reshape each row of raw (N x P) to a sqrt(P) grid, resize to `out`, then
// min-max normalise per sample.
ad::Var resize_and_normalize(const ad::Var& raw, OutputSize out);

// Dot product of every patch token with its sample's text vector, resized and
// normalised. patches: (N*P) x d, text_per_sample: N x d.
ad::Var text_guided_attention(const ad::Var& patches, const ad::Var& text_per_sample,
                              OutputSize out);
AttentionMap text_guided_attention(const Tensor& patches, const Tensor& text_per_sample,
                                   OutputSize out);

// Grad-CAM channel weights: mean over patches of d(ground-truth logit)/d(activation).
// Returns N x d.
Tensor gradcam_weights(const ImageEncoder& encoder, const Tensor& pixels, const ImageShape& shape,
                       std::span<const int> labels, const TextEmbeddings& text,
                       double temperature);

// relu(sum_c w_c * activation_c) per patch, resized and normalised. The
// weights are constants; gradients flow through the activations only.
ad::Var gradcam_map(const ad::Var& activations, const Tensor& weights, OutputSize out);

AttentionMap gradient_attention(const ImageEncoder& encoder, const ImageBatch& batch,
                                const TextEmbeddings& text, double temperature, OutputSize out);

}  // namespace tgazsr
