// Copyright 2026 The tgazsr Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tgazsr/autograd.hpp"

#include <algorithm>
#include <array>
#include <tuple>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "tgazsr/kernels.hpp"

namespace tgazsr {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::shape_mismatch: return "shape mismatch";
    case ErrorCode::dimension_mismatch: return "dimension mismatch";
    case ErrorCode::missing_class: return "missing class";
    case ErrorCode::label_out_of_range: return "label out of range";
    case ErrorCode::missing_file: return "missing file";
    case ErrorCode::malformed_manifest: return "malformed manifest";
    case ErrorCode::empty_dataset: return "empty dataset";
    case ErrorCode::non_finite_loss: return "non-finite loss";
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::config: return "config error";
    case ErrorCode::io: return "i/o error";
  }
  return "error";
}

}  // namespace tgazsr

namespace tgazsr::ad {
namespace {

thread_local bool g_grad_enabled = true;

using Backward = std::function<void(Node&)>;

Var make(Tensor value, std::initializer_list<Var> parents, Backward fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(fn);
  }
  return Var(std::move(node));
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::shape_mismatch,
                std::string(op) + ": " + std::to_string(a.rows()) + "x" +
                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                    "x" + std::to_string(b.cols()));
  }
}

template <class F>
Var unary_elementwise(const Var& x, F&& forward_and_slope) {
  Tensor out(x.rows(), x.cols());
  std::vector<double> slope(x.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto [y, s] = forward_and_slope(x.value().data[i]);
    out.data[i] = y;
    slope[i] = s;
  }
  return make(std::move(out), {x}, [slope = std::move(slope)](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * slope[i];
  });
}

}  // namespace

std::span<double> Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor Var::grad() const {
  Tensor g(rows(), cols());
  if (!node_->grad.empty()) g.data = node_->grad;
  return g;
}

double Var::item() const {
  if (node_->value.size() != 1) {
    throw Error(ErrorCode::shape_mismatch, "item() on non-scalar");
  }
  return node_->value.data[0];
}

void Var::backward() const {
  if (!node_->requires_grad) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (Node* n : order) n->grad.clear();
  // Non-scalar roots are treated as the sum of their entries.
  node_->grad.assign(node_->value.size(), 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

Var detach(const Var& x) { return constant(x.value()); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.value().data[i];
  return make(std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b.value().data[i];
  return make(std::move(out), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad) {
      auto g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      auto g = self.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.value().data[i];
  return make(std::move(out), {a, b}, [](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    if (na.requires_grad) {
      auto g = na.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * nb.value.data[i];
    }
    if (nb.requires_grad) {
      auto g = nb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * na.value.data[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.data) v *= s;
  return make(std::move(out), {a}, [s](Node& self) {
    kernels::axpy(s, self.grad, self.parents[0]->grad_buffer());
  });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw Error(ErrorCode::shape_mismatch, "add_row: bias width");
  }
  Tensor out = a.value();
  for (std::size_t r = 0; r < out.rows; ++r) {
    auto dst = out.row(r);
    for (std::size_t c = 0; c < out.cols; ++c) dst[c] += row.value().data[c];
  }
  return make(std::move(out), {a, row}, [](Node& self) {
    const std::size_t cols = self.value.cols;
    if (self.parents[0]->requires_grad) {
      kernels::axpy(1.0, self.grad, self.parents[0]->grad_buffer());
    }
    if (self.parents[1]->requires_grad) {
      auto g = self.parents[1]->grad_buffer();
      for (std::size_t r = 0; r < self.value.rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) g[c] += self.grad[r * cols + c];
      }
    }
  });
}

Var add_tiled(const Var& a, const Var& tile) {
  if (tile.cols() != a.cols() || tile.rows() == 0 || a.rows() % tile.rows() != 0) {
    throw Error(ErrorCode::shape_mismatch, "add_tiled: tile shape");
  }
  Tensor out = a.value();
  const std::size_t tile_size = tile.value().size();
  for (std::size_t off = 0; off < out.size(); off += tile_size) {
    for (std::size_t i = 0; i < tile_size; ++i) out.data[off + i] += tile.value().data[i];
  }
  return make(std::move(out), {a, tile}, [tile_size](Node& self) {
    if (self.parents[0]->requires_grad) {
      kernels::axpy(1.0, self.grad, self.parents[0]->grad_buffer());
    }
    if (self.parents[1]->requires_grad) {
      auto g = self.parents[1]->grad_buffer();
      for (std::size_t off = 0; off < self.grad.size(); off += tile_size) {
        for (std::size_t i = 0; i < tile_size; ++i) g[i] += self.grad[off + i];
      }
    }
  });
}

Var relu(const Var& x) {
  return unary_elementwise(x, [](double v) {
    return v > 0.0 ? std::pair{v, 1.0} : std::pair{0.0, 0.0};
  });
}

Var gelu(const Var& x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double c = 0.044715;
  return unary_elementwise(x, [](double v) {
    const double u = k * (v + c * v * v * v);
    const double t = std::tanh(u);
    const double y = 0.5 * v * (1.0 + t);
    const double dy = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * k * (1.0 + 3.0 * c * v * v);
    return std::pair{y, dy};
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorCode::shape_mismatch, "matmul: inner dimensions");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out(m, n);
  kernels::gemm_nn(a.value().data, b.value().data, out.data, m, k, n);
  return make(std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    if (na.requires_grad) kernels::gemm_nt(self.grad, nb.value.data, na.grad_buffer(), m, n, k);
    if (nb.requires_grad) kernels::gemm_tn(na.value.data, self.grad, nb.grad_buffer(), k, m, n);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) {
    throw Error(ErrorCode::shape_mismatch, "matmul_nt: inner dimensions");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor out(m, n);
  kernels::gemm_nt(a.value().data, b.value().data, out.data, m, k, n);
  return make(std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    if (na.requires_grad) kernels::gemm_nn(self.grad, nb.value.data, na.grad_buffer(), m, n, k);
    if (nb.requires_grad) kernels::gemm_tn(self.grad, na.value.data, nb.grad_buffer(), n, m, k);
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const std::size_t rows = x.rows(), d = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d) {
    throw Error(ErrorCode::shape_mismatch, "layer_norm: affine width");
  }
  Tensor out(rows, d);
  std::vector<double> xhat(rows * d);
  std::vector<double> inv_std(rows);
  const auto& g = gamma.value().data;
  const auto& b = beta.value().data;
  for (std::size_t r = 0; r < rows; ++r) {
    auto xr = x.value().row(r);
    double mean = 0.0;
    for (double v : xr) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t c = 0; c < d; ++c) {
      const double h = (xr[c] - mean) * inv;
      xhat[r * d + c] = h;
      out(r, c) = h * g[c] + b[c];
    }
  }
  return make(std::move(out), {x, gamma, beta},
              [xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d](Node& self) {
                Node& nx = *self.parents[0];
                Node& ng = *self.parents[1];
                Node& nb = *self.parents[2];
                const auto& gv = ng.value.data;
                if (ng.requires_grad || nb.requires_grad) {
                  for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < d; ++c) {
                      const double dy = self.grad[r * d + c];
                      if (ng.requires_grad) ng.grad_buffer()[c] += dy * xhat[r * d + c];
                      if (nb.requires_grad) nb.grad_buffer()[c] += dy;
                    }
                  }
                }
                if (!nx.requires_grad) return;
                auto gx = nx.grad_buffer();
                std::vector<double> dh(d);
                for (std::size_t r = 0; r < rows; ++r) {
                  double mean_dh = 0.0, mean_dh_h = 0.0;
                  for (std::size_t c = 0; c < d; ++c) {
                    dh[c] = self.grad[r * d + c] * gv[c];
                    mean_dh += dh[c];
                    mean_dh_h += dh[c] * xhat[r * d + c];
                  }
                  mean_dh /= static_cast<double>(d);
                  mean_dh_h /= static_cast<double>(d);
                  for (std::size_t c = 0; c < d; ++c) {
                    gx[r * d + c] += inv_std[r] * (dh[c] - mean_dh - xhat[r * d + c] * mean_dh_h);
                  }
                }
              });
}

Var multi_head_attention(const Var& qkv, std::size_t seq_len, std::size_t heads) {
  if (seq_len == 0 || heads == 0 || qkv.cols() % 3 != 0 || qkv.rows() % seq_len != 0 ||
      (qkv.cols() / 3) % heads != 0) {
    throw Error(ErrorCode::shape_mismatch, "multi_head_attention: layout");
  }
  const std::size_t width = qkv.cols();
  const std::size_t d = width / 3;
  const std::size_t dh = d / heads;
  const std::size_t n_seq = qkv.rows() / seq_len;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::size_t ss = seq_len * seq_len;

  Tensor out(qkv.rows(), d);
  std::vector<double> probs(n_seq * heads * ss);
  std::vector<double> q(seq_len * dh), k(seq_len * dh), v(seq_len * dh), o(seq_len * dh);
  const auto& src = qkv.value().data;

  auto gather = [&](std::vector<double>& dst, std::size_t seq, std::size_t col0) {
    for (std::size_t t = 0; t < seq_len; ++t) {
      const double* row = src.data() + (seq * seq_len + t) * width + col0;
      std::copy(row, row + dh, dst.data() + t * dh);
    }
  };

  for (std::size_t s = 0; s < n_seq; ++s) {
    for (std::size_t h = 0; h < heads; ++h) {
      gather(q, s, h * dh);
      gather(k, s, d + h * dh);
      gather(v, s, 2 * d + h * dh);
      double* p = probs.data() + (s * heads + h) * ss;
      std::fill(p, p + ss, 0.0);
      kernels::gemm_nt(q, k, {p, ss}, seq_len, dh, seq_len);
      for (std::size_t i = 0; i < seq_len; ++i) {
        double* pr = p + i * seq_len;
        double mx = pr[0] * inv_sqrt;
        for (std::size_t j = 0; j < seq_len; ++j) mx = std::max(mx, pr[j] * inv_sqrt);
        double z = 0.0;
        for (std::size_t j = 0; j < seq_len; ++j) {
          pr[j] = std::exp(pr[j] * inv_sqrt - mx);
          z += pr[j];
        }
        for (std::size_t j = 0; j < seq_len; ++j) pr[j] /= z;
      }
      std::fill(o.begin(), o.end(), 0.0);
      kernels::gemm_nn({p, ss}, v, o, seq_len, seq_len, dh);
      for (std::size_t t = 0; t < seq_len; ++t) {
        std::copy(o.data() + t * dh, o.data() + (t + 1) * dh,
                  out.data.data() + (s * seq_len + t) * d + h * dh);
      }
    }
  }

  return make(std::move(out), {qkv},
              [probs = std::move(probs), seq_len, heads, d, dh, n_seq, width, inv_sqrt,
               ss](Node& self) {
                Node& nq = *self.parents[0];
                const auto& src = nq.value.data;
                auto gsrc = nq.grad_buffer();
                std::vector<double> q(seq_len * dh), k(seq_len * dh), v(seq_len * dh);
                std::vector<double> dout(seq_len * dh), dq(seq_len * dh), dk(seq_len * dh),
                    dv(seq_len * dh), dp(ss);
                auto gather = [&](const double* from, std::size_t stride, std::vector<double>& dst,
                                  std::size_t seq, std::size_t col0) {
                  for (std::size_t t = 0; t < seq_len; ++t) {
                    const double* row = from + (seq * seq_len + t) * stride + col0;
                    std::copy(row, row + dh, dst.data() + t * dh);
                  }
                };
                auto scatter = [&](const std::vector<double>& from, std::size_t seq,
                                   std::size_t col0) {
                  for (std::size_t t = 0; t < seq_len; ++t) {
                    double* row = gsrc.data() + (seq * seq_len + t) * width + col0;
                    for (std::size_t c = 0; c < dh; ++c) row[c] += from[t * dh + c];
                  }
                };
                for (std::size_t s = 0; s < n_seq; ++s) {
                  for (std::size_t h = 0; h < heads; ++h) {
                    gather(src.data(), width, q, s, h * dh);
                    gather(src.data(), width, k, s, d + h * dh);
                    gather(src.data(), width, v, s, 2 * d + h * dh);
                    gather(self.grad.data(), d, dout, s, h * dh);
                    const double* p = probs.data() + (s * heads + h) * ss;
                    std::span<const double> pspan{p, ss};
                    // dV = P^T dO ; dP = dO V^T
                    std::fill(dv.begin(), dv.end(), 0.0);
                    kernels::gemm_tn(pspan, dout, dv, seq_len, seq_len, dh);
                    std::fill(dp.begin(), dp.end(), 0.0);
                    kernels::gemm_nt(dout, v, dp, seq_len, dh, seq_len);
                    // softmax backward, folded with the 1/sqrt(dh) score scale
                    for (std::size_t i = 0; i < seq_len; ++i) {
                      double acc = 0.0;
                      for (std::size_t j = 0; j < seq_len; ++j) acc += dp[i * seq_len + j] * p[i * seq_len + j];
                      for (std::size_t j = 0; j < seq_len; ++j) {
                        dp[i * seq_len + j] = p[i * seq_len + j] * (dp[i * seq_len + j] - acc) * inv_sqrt;
                      }
                    }
                    std::fill(dq.begin(), dq.end(), 0.0);
                    kernels::gemm_nn(dp, k, dq, seq_len, seq_len, dh);
                    std::fill(dk.begin(), dk.end(), 0.0);
                    kernels::gemm_tn(dp, q, dk, seq_len, seq_len, dh);
                    scatter(dq, s, h * dh);
                    scatter(dk, s, d + h * dh);
                    scatter(dv, s, 2 * d + h * dh);
                  }
                }
              });
}

Var patchify(const Var& pixels, std::size_t channels, std::size_t height, std::size_t width,
             std::size_t patch) {
  if (patch == 0 || height % patch != 0 || width % patch != 0) {
    throw Error(ErrorCode::shape_mismatch, "image side not divisible by patch size " +
                                               std::to_string(patch));
  }
  if (pixels.cols() != channels * height * width) {
    throw Error(ErrorCode::shape_mismatch, "patchify: pixel row width");
  }
  const std::size_t gh = height / patch, gw = width / patch;
  const std::size_t n_patches = gh * gw;
  const std::size_t pdim = channels * patch * patch;
  const std::size_t n = pixels.rows();
  // index[out] = source pixel offset within the image row
  std::vector<std::size_t> index(n_patches * pdim);
  for (std::size_t gy = 0; gy < gh; ++gy) {
    for (std::size_t gx = 0; gx < gw; ++gx) {
      const std::size_t pi = gy * gw + gx;
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t py = 0; py < patch; ++py) {
          for (std::size_t px = 0; px < patch; ++px) {
            index[pi * pdim + (c * patch + py) * patch + px] =
                c * height * width + (gy * patch + py) * width + gx * patch + px;
          }
        }
      }
    }
  }
  Tensor out(n * n_patches, pdim);
  const std::size_t img = pixels.cols();
  for (std::size_t i = 0; i < n; ++i) {
    const double* src = pixels.value().data.data() + i * img;
    double* dst = out.data.data() + i * n_patches * pdim;
    for (std::size_t j = 0; j < index.size(); ++j) dst[j] = src[index[j]];
  }
  return make(std::move(out), {pixels}, [index = std::move(index), n, img](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    const std::size_t per = index.size();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < per; ++j) g[i * img + index[j]] += self.grad[i * per + j];
    }
  });
}

Var block_mean(const Var& x, std::size_t block_rows) {
  if (block_rows == 0 || x.rows() % block_rows != 0) {
    throw Error(ErrorCode::shape_mismatch, "block_mean: rows not divisible by block");
  }
  const std::size_t n = x.rows() / block_rows, d = x.cols();
  const double inv = 1.0 / static_cast<double>(block_rows);
  Tensor out(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < block_rows; ++r) {
      kernels::axpy(inv, x.value().row(i * block_rows + r), out.row(i));
    }
  }
  return make(std::move(out), {x}, [n, d, block_rows, inv](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t r = 0; r < block_rows; ++r) {
        kernels::axpy(inv, {self.grad.data() + i * d, d},
                      g.subspan((i * block_rows + r) * d, d));
      }
    }
  });
}

Var l2_normalize_rows(const Var& x, double eps) {
  Tensor out = x.value();
  std::vector<double> norms(x.rows());
  for (std::size_t r = 0; r < out.rows; ++r) {
    auto row = out.row(r);
    const double nrm = std::sqrt(kernels::dot(row, row));
    norms[r] = nrm;
    const double inv = nrm > eps ? 1.0 / nrm : 0.0;
    for (double& v : row) v *= inv;
  }
  return make(std::move(out), {x}, [norms = std::move(norms), eps](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    const std::size_t d = self.value.cols;
    for (std::size_t r = 0; r < self.value.rows; ++r) {
      if (norms[r] <= eps) continue;
      std::span<const double> y = self.value.row(r);
      std::span<const double> dy{self.grad.data() + r * d, d};
      const double proj = kernels::dot(dy, y);
      for (std::size_t c = 0; c < d; ++c) g[r * d + c] += (dy[c] - y[c] * proj) / norms[r];
    }
  });
}

Var row_dot(const Var& x, const Var& v) {
  if (v.rows() == 0 || x.cols() != v.cols() || x.rows() % v.rows() != 0) {
    throw Error(ErrorCode::dimension_mismatch, "row_dot: feature width or block count");
  }
  const std::size_t n = v.rows(), p = x.rows() / n, d = x.cols();
  Tensor out(n, p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) out(i, j) = kernels::dot(x.value().row(i * p + j), v.value().row(i));
  }
  return make(std::move(out), {x, v}, [n, p, d](Node& self) {
    Node& nx = *self.parents[0];
    Node& nv = *self.parents[1];
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < p; ++j) {
        const double g = self.grad[i * p + j];
        if (g == 0.0) continue;
        if (nx.requires_grad) {
          kernels::axpy(g, nv.value.row(i), nx.grad_buffer().subspan((i * p + j) * d, d));
        }
        if (nv.requires_grad) {
          kernels::axpy(g, nx.value.row(i * p + j), nv.grad_buffer().subspan(i * d, d));
        }
      }
    }
  });
}

Var minmax_normalize_rows(const Var& x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor out(rows, cols);
  struct RowInfo {
    double range = 0.0;
    std::size_t imin = 0, imax = 0;
    bool unique_min = true, unique_max = true;
  };
  std::vector<RowInfo> info(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    auto xr = x.value().row(r);
    RowInfo ri;
    for (std::size_t c = 1; c < cols; ++c) {
      if (xr[c] < xr[ri.imin]) ri.imin = c;
      if (xr[c] > xr[ri.imax]) ri.imax = c;
    }
    const double lo = xr[ri.imin], hi = xr[ri.imax];
    ri.range = hi - lo;
    for (std::size_t c = 0; c < cols; ++c) {
      if (c != ri.imin && xr[c] == lo) ri.unique_min = false;
      if (c != ri.imax && xr[c] == hi) ri.unique_max = false;
    }
    info[r] = ri;
    if (ri.range > 0.0) {
      for (std::size_t c = 0; c < cols; ++c) out(r, c) = (xr[c] - lo) / ri.range;
    }
  }
  return make(std::move(out), {x}, [info = std::move(info), cols](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < info.size(); ++r) {
      const RowInfo& ri = info[r];
      if (ri.range <= 0.0) continue;
      double to_min = 0.0, to_max = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        const double dy = self.grad[r * cols + c];
        const double y = self.value.data[r * cols + c];
        g[r * cols + c] += dy / ri.range;
        to_min += dy * (y - 1.0) / ri.range;
        to_max -= dy * y / ri.range;
      }
      if (ri.unique_min) g[r * cols + ri.imin] += to_min;
      if (ri.unique_max) g[r * cols + ri.imax] += to_max;
    }
  });
}

namespace {
void check_labels(const Var& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows()) {
    throw Error(ErrorCode::shape_mismatch, "label count does not match logits rows");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols()) {
      throw Error(ErrorCode::label_out_of_range, "label " + std::to_string(y));
    }
  }
}
}  // namespace

Var cross_entropy(const Var& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  const std::size_t n = logits.rows(), k = logits.cols();
  Tensor softmax(n, k);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto z = logits.value().row(i);
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      softmax(i, j) = std::exp(z[j] - mx);
      s += softmax(i, j);
    }
    for (std::size_t j = 0; j < k; ++j) softmax(i, j) /= s;
    total += mx + std::log(s) - z[static_cast<std::size_t>(labels[i])];
  }
  std::vector<int> ys(labels.begin(), labels.end());
  return make(Tensor(1, 1, total / static_cast<double>(n)), {logits},
              [softmax = std::move(softmax), ys = std::move(ys)](Node& self) {
                auto g = self.parents[0]->grad_buffer();
                const double scale = self.grad[0] / static_cast<double>(softmax.rows);
                for (std::size_t i = 0; i < softmax.rows; ++i) {
                  for (std::size_t j = 0; j < softmax.cols; ++j) {
                    const double onehot = static_cast<int>(j) == ys[i] ? 1.0 : 0.0;
                    g[i * softmax.cols + j] += scale * (softmax(i, j) - onehot);
                  }
                }
              });
}

Var cw_margin(const Var& logits, std::span<const int> labels, double kappa) {
  check_labels(logits, labels);
  const std::size_t n = logits.rows(), k = logits.cols();
  if (k < 2) throw Error(ErrorCode::shape_mismatch, "cw_margin needs at least 2 classes");
  double total = 0.0;
  // (label, best other class, active) per sample
  std::vector<std::tuple<std::size_t, std::size_t, bool>> route(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto z = logits.value().row(i);
    const auto y = static_cast<std::size_t>(labels[i]);
    std::size_t other = y == 0 ? 1 : 0;
    for (std::size_t j = 0; j < k; ++j) {
      if (j != y && z[j] > z[other]) other = j;
    }
    const double margin = z[other] - z[y];
    const bool active = margin < kappa;
    total += active ? margin : kappa;
    route[i] = {y, other, active};
  }
  return make(Tensor(1, 1, total / static_cast<double>(n)), {logits},
              [route = std::move(route), k](Node& self) {
                auto g = self.parents[0]->grad_buffer();
                const double scale = self.grad[0] / static_cast<double>(route.size());
                for (std::size_t i = 0; i < route.size(); ++i) {
                  auto [y, other, active] = route[i];
                  if (!active) continue;
                  g[i * k + other] += scale;
                  g[i * k + y] -= scale;
                }
              });
}

Var row_l2_distance(const Var& a, const Var& b) {
  require_same_shape(a, b, "row_l2_distance");
  const std::size_t n = a.rows(), d = a.cols();
  Tensor out(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = a.value()(i, c) - b.value()(i, c);
      s += diff * diff;
    }
    out(i, 0) = std::sqrt(s);
  }
  return make(std::move(out), {a, b}, [n, d](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    for (std::size_t i = 0; i < n; ++i) {
      const double dist = self.value.data[i];
      if (dist == 0.0) continue;
      const double s = self.grad[i] / dist;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = na.value(i, c) - nb.value(i, c);
        if (na.requires_grad) na.grad_buffer()[i * d + c] += s * diff;
        if (nb.requires_grad) nb.grad_buffer()[i * d + c] -= s * diff;
      }
    }
  });
}

Var row_l1_distance(const Var& a, const Var& b) {
  require_same_shape(a, b, "row_l1_distance");
  const std::size_t n = a.rows(), d = a.cols();
  Tensor out(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += std::abs(a.value()(i, c) - b.value()(i, c));
    out(i, 0) = s;
  }
  return make(std::move(out), {a, b}, [n, d](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = na.value(i, c) - nb.value(i, c);
        const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        if (na.requires_grad) na.grad_buffer()[i * d + c] += self.grad[i] * sgn;
        if (nb.requires_grad) nb.grad_buffer()[i * d + c] -= self.grad[i] * sgn;
      }
    }
  });
}

Var row_cosine_distance(const Var& a, const Var& b) {
  require_same_shape(a, b, "row_cosine_distance");
  const std::size_t n = a.rows(), d = a.cols();
  Tensor out(n, 1);
  std::vector<std::array<double, 3>> stats(n);  // |a|, |b|, cos
  for (std::size_t i = 0; i < n; ++i) {
    const double na = std::sqrt(kernels::dot(a.value().row(i), a.value().row(i)));
    const double nb = std::sqrt(kernels::dot(b.value().row(i), b.value().row(i)));
    double cos = 0.0;
    if (na == 0.0 && nb == 0.0) {
      out(i, 0) = 0.0;
    } else if (na == 0.0 || nb == 0.0) {
      out(i, 0) = 1.0;
    } else {
      cos = kernels::dot(a.value().row(i), b.value().row(i)) / (na * nb);
      out(i, 0) = 1.0 - cos;
    }
    stats[i] = {na, nb, cos};
  }
  return make(std::move(out), {a, b}, [stats = std::move(stats), n, d](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (std::size_t i = 0; i < n; ++i) {
      auto [na, nb, cos] = stats[i];
      if (na == 0.0 || nb == 0.0) continue;
      const double g = -self.grad[i];
      for (std::size_t c = 0; c < d; ++c) {
        const double av = pa.value(i, c), bv = pb.value(i, c);
        if (pa.requires_grad) pa.grad_buffer()[i * d + c] += g * (bv / (na * nb) - cos * av / (na * na));
        if (pb.requires_grad) pb.grad_buffer()[i * d + c] += g * (av / (na * nb) - cos * bv / (nb * nb));
      }
    }
  });
}

Var sum_all(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data) s += v;
  return make(Tensor(1, 1, s), {x}, [](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (double& v : g) v += self.grad[0];
  });
}

Var mean_all(const Var& x) {
  if (x.value().size() == 0) throw Error(ErrorCode::shape_mismatch, "mean of empty tensor");
  return scale(sum_all(x), 1.0 / static_cast<double>(x.value().size()));
}

}  // namespace tgazsr::ad
