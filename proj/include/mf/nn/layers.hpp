#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mf/autodiff/ops.hpp"
#include "mf/autodiff/params.hpp"
#include "mf/autodiff/rng.hpp"

namespace mf::nn {

/// y = x W + b with x[N, in], W[in, out].
template <typename T>
struct Linear {
  Tensor<T> weight, bias;
  std::size_t in = 0, out = 0;

  static Linear make(ParamStore<T>& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                     bool with_bias = true);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct LayerNorm {
  Tensor<T> gain, bias;

  static LayerNorm make(ParamStore<T>& ps, const std::string& name, std::size_t dim, Rng& rng);
  /// x[N, C]
  Tensor<T> operator()(const Tensor<T>& x) const;
  /// Normalizes over channels of a [1, C, H, W] map.
  Tensor<T> channels(const Tensor<T>& x) const;
};

template <typename T>
struct Conv {
  Tensor<T> weight, bias;
  std::size_t stride = 1, padding = 0;

  static Conv make(ParamStore<T>& ps, const std::string& name, std::size_t cin, std::size_t cout, std::size_t kernel,
                   std::size_t stride, std::size_t padding, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

/// Kernel 2, stride 2 upsampler.
template <typename T>
struct ConvUp {
  Tensor<T> weight, bias;

  static ConvUp make(ParamStore<T>& ps, const std::string& name, std::size_t cin, std::size_t cout, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

/// Mean over heads of the attention weights, [batch, Nq, Nk] row-major.
struct AttentionRecord {
  std::size_t batch = 0, queries = 0, keys = 0;
  std::vector<double> weights;
};

template <typename T>
struct MultiHeadAttention {
  Linear<T> q, k, v, o;
  std::size_t dim = 0, heads = 1;

  static MultiHeadAttention make(ParamStore<T>& ps, const std::string& name, std::size_t dim, std::size_t heads,
                                 Rng& rng);
  /// q_in[B*Nq, C], kv_in[B*Nk, C] -> [B*Nq, C]. Sequences are independent per batch entry.
  Tensor<T> operator()(const Tensor<T>& q_in, const Tensor<T>& kv_in, std::size_t batch,
                       AttentionRecord* record = nullptr) const;
};

/// Scaled dot-product attention on already projected, head-split operands.
/// q[BH, Nq, d], k[BH, Nk, d], v[BH, Nk, d]. Large no-grad calls are evaluated in
/// query chunks without materializing the full score tensor.
template <typename T>
Tensor<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               std::vector<T>* probs_out = nullptr);

/// Pre-norm encoder layer: x + MHA(LN(x)), then x + FFN(LN(x)) with GELU.
template <typename T>
struct TransformerLayer {
  LayerNorm<T> ln1, ln2;
  MultiHeadAttention<T> attn;
  Linear<T> ff1, ff2;

  static TransformerLayer make(ParamStore<T>& ps, const std::string& name, std::size_t dim, std::size_t heads,
                               std::size_t hidden, Rng& rng);
  /// x[B*N, C]
  Tensor<T> operator()(const Tensor<T>& x, std::size_t batch = 1, AttentionRecord* record = nullptr) const;
};

template <typename T>
struct TransformerStack {
  std::vector<TransformerLayer<T>> layers;
  LayerNorm<T> final_norm;

  static TransformerStack make(ParamStore<T>& ps, const std::string& name, std::size_t depth, std::size_t dim,
                               std::size_t heads, std::size_t hidden, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x, std::vector<AttentionRecord>* records = nullptr) const;
};

/// CSV of one attention record: layer, batch, query, key, weight.
std::string attention_to_csv(const std::vector<AttentionRecord>& records);

/// [1, C, H, W] -> [H*W, C]
template <typename T>
Tensor<T> map_to_rows(const Tensor<T>& x);
/// [H*W, C] -> [1, C, H, W]
template <typename T>
Tensor<T> rows_to_map(const Tensor<T>& rows, std::size_t h, std::size_t w);

}  // namespace mf::nn
