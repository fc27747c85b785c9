#pragma once

#include <cstddef>
#include <vector>

#include "mf/autodiff/tensor.hpp"

// Differentiable primitives. Every op checks shapes and throws TensorError naming
// itself and the offending shapes. Broadcasting is limited to the trailing axis
// (add_bias / mul_trailing); everything else must match exactly.
namespace mf {

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T value);
/// x[..., C] + b[C]
template <typename T> Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);
/// x[..., C] * g[C]
template <typename T> Tensor<T> mul_trailing(const Tensor<T>& x, const Tensor<T>& gain);

template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> gelu(const Tensor<T>& a);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T> Tensor<T> tanh(const Tensor<T>& a);
template <typename T> Tensor<T> exp(const Tensor<T>& a);
template <typename T> Tensor<T> log(const Tensor<T>& a);
template <typename T> Tensor<T> abs(const Tensor<T>& a);
template <typename T> Tensor<T> square(const Tensor<T>& a);
template <typename T> Tensor<T> pow_scalar(const Tensor<T>& a, T exponent);
/// Gradient passes only where lo < a < hi.
template <typename T> Tensor<T> clamp(const Tensor<T>& a, T lo, T hi);

template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);
/// x[N, C] -> [C]
template <typename T> Tensor<T> mean_rows(const Tensor<T>& x);

template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
/// Swaps the two axes of a matrix.
template <typename T> Tensor<T> transpose(const Tensor<T>& a);
template <typename T> Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& axes);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);
template <typename T> Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t start, std::size_t length);
template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& a, std::size_t axis, const std::vector<std::size_t>& sizes);
/// Gathers rows (axis 0); repeated indices accumulate on backward.
template <typename T> Tensor<T> index_select(const Tensor<T>& a, const std::vector<std::size_t>& rows);
/// v[C] -> [n, C]
template <typename T> Tensor<T> broadcast_rows(const Tensor<T>& v, std::size_t n);

template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// a[B, M, K] x b[B, K, N] -> [B, M, N]
template <typename T> Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> softmax(const Tensor<T>& a);
template <typename T> Tensor<T> log_softmax(const Tensor<T>& a);
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps = T(1e-5));

/// x[N, Cin, H, W], w[Cout, Cin, kh, kw], optional bias[Cout].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::size_t stride,
                 std::size_t padding);
/// Adjoint of conv2d. x[N, Cin, H, W], w[Cin, Cout, kh, kw]; out extent (H-1)s - 2p + k.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::size_t stride,
                           std::size_t padding);
template <typename T> Tensor<T> max_pool2d(const Tensor<T>& x, std::size_t kernel, std::size_t stride);
template <typename T> Tensor<T> avg_pool2d(const Tensor<T>& x, std::size_t kernel, std::size_t stride);

/// table[V, C] gathered at ids -> [ids.size(), C]
template <typename T> Tensor<T> embedding(const Tensor<T>& table, const std::vector<std::size_t>& ids);

/// Fixed sparse linear map between row sets: out[r] = sum_k weight[k] * in[index[k]]
/// for k in [offsets[r], offsets[r+1]).
struct SparseMap {
  std::size_t rows_in = 0;
  std::size_t rows_out = 0;
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> index;
  std::vector<double> weight;

  void add_row(const std::vector<std::pair<std::size_t, double>>& entries);
  SparseMap transposed() const;
};

/// x[rows_in, C] -> [rows_out, C]
template <typename T> Tensor<T> sparse_map(const Tensor<T>& x, const SparseMap& map);

/// Row-major GEMM on raw buffers: C = alpha * op(A) op(B) + beta * C.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
          const T* b, T beta, T* c);

}  // namespace mf
