// Copyright 2026 The tgazsr Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "tgazsr/tensor.hpp"

// Minimal reverse-mode differentiation over 2-D tensors.
//
// A Var is a handle to a node in a dynamically built graph. Nodes record their
// parents and a closure that pushes the node's gradient into them. Calling
// backward() on a 1x1 result walks the graph in reverse topological order.
// Graphs are built per forward pass and dropped with their last handle.
namespace tgazsr::ad {

struct Node {
  Tensor value;
  std::vector<double> grad;  // empty until something flows in
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::span<double> grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  std::size_t rows() const { return node_->value.rows; }
  std::size_t cols() const { return node_->value.cols; }
  bool requires_grad() const { return node_->requires_grad; }
  // Gradient accumulated by the last backward(); zeros if none reached this node.
  Tensor grad() const;
  double item() const;
  void backward() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Tensor value);
Var leaf(Tensor value, bool requires_grad = true);
Var detach(const Var& x);

// Disables graph construction on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

// Elementwise and broadcasting arithmetic.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
// a[r, :] + row[0, :] for every r.
Var add_row(const Var& a, const Var& row);
// a has blocks of tile.rows rows; adds tile to each block.
Var add_tiled(const Var& a, const Var& tile);
Var relu(const Var& x);
Var gelu(const Var& x);  // tanh approximation

Var matmul(const Var& a, const Var& b);
// a * b^T
Var matmul_nt(const Var& a, const Var& b);

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// Self-attention over independent sequences of `seq_len` rows. qkv packs
// [q | k | v] along columns (3*d), heads split d evenly.
Var multi_head_attention(const Var& qkv, std::size_t seq_len, std::size_t heads);

// pixels: N x (C*H*W), channel-major per image. Output: (N*P) x (C*p*p) with
// patches in row-major grid order.
Var patchify(const Var& pixels, std::size_t channels, std::size_t height,
             std::size_t width, std::size_t patch);

// Mean over consecutive blocks of `block_rows` rows: (N*B) x d -> N x d.
Var block_mean(const Var& x, std::size_t block_rows);
Var l2_normalize_rows(const Var& x, double eps = 1e-12);
// x: (N*P) x d, v: N x d -> N x P with out[i, p] = <x[i*P + p], v[i]>.
Var row_dot(const Var& x, const Var& v);
// Per-row min-max scaling to [0,1]; constant rows become zeros.
Var minmax_normalize_rows(const Var& x);

// Mean cross-entropy of softmax(logits) against labels -> 1x1.
Var cross_entropy(const Var& logits, std::span<const int> labels);
// Per-sample CW margin min(max_{k!=y} z_k - z_y, kappa), averaged -> 1x1.
// Saturates once a sample is misclassified by kappa.
Var cw_margin(const Var& logits, std::span<const int> labels, double kappa);

// Row-wise distances -> N x 1.
Var row_l2_distance(const Var& a, const Var& b);
Var row_l1_distance(const Var& a, const Var& b);
Var row_cosine_distance(const Var& a, const Var& b);

Var sum_all(const Var& x);
Var mean_all(const Var& x);

}  // namespace tgazsr::ad
