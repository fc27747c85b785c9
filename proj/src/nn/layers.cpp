#include "mf/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mf::nn {

template <typename T>
Linear<T> Linear<T>::make(ParamStore<T>& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                          bool with_bias) {
  Linear l;
  l.in = in;
  l.out = out;
  l.weight = ps.create(name + ".w", {in, out}, Init::xavier_uniform, rng);
  if (with_bias) l.bias = ps.create(name + ".b", {out}, Init::zeros, rng);
  return l;
}

template <typename T>
Tensor<T> Linear<T>::operator()(const Tensor<T>& x) const {
  auto y = matmul(x, weight);
  return bias.defined() ? add_bias(y, bias) : y;
}

template <typename T>
LayerNorm<T> LayerNorm<T>::make(ParamStore<T>& ps, const std::string& name, std::size_t dim, Rng& rng) {
  LayerNorm l;
  l.gain = ps.create(name + ".g", {dim}, Init::ones, rng);
  l.bias = ps.create(name + ".b", {dim}, Init::zeros, rng);
  return l;
}

template <typename T>
Tensor<T> LayerNorm<T>::operator()(const Tensor<T>& x) const {
  return layer_norm(x, gain, bias);
}

template <typename T>
Tensor<T> LayerNorm<T>::channels(const Tensor<T>& x) const {
  const std::size_t h = x.dim(2), w = x.dim(3);
  return rows_to_map(layer_norm(map_to_rows(x), gain, bias), h, w);
}

template <typename T>
Conv<T> Conv<T>::make(ParamStore<T>& ps, const std::string& name, std::size_t cin, std::size_t cout,
                      std::size_t kernel, std::size_t stride, std::size_t padding, Rng& rng) {
  Conv c;
  c.stride = stride;
  c.padding = padding;
  c.weight = ps.create(name + ".w", {cout, cin, kernel, kernel}, Init::kaiming_uniform, rng, cin * kernel * kernel);
  c.bias = ps.create(name + ".b", {cout}, Init::zeros, rng);
  return c;
}

template <typename T>
Tensor<T> Conv<T>::operator()(const Tensor<T>& x) const {
  return conv2d(x, weight, bias, stride, padding);
}

template <typename T>
ConvUp<T> ConvUp<T>::make(ParamStore<T>& ps, const std::string& name, std::size_t cin, std::size_t cout, Rng& rng) {
  ConvUp c;
  c.weight = ps.create(name + ".w", {cin, cout, 2, 2}, Init::kaiming_uniform, rng, cin);
  c.bias = ps.create(name + ".b", {cout}, Init::zeros, rng);
  return c;
}

template <typename T>
Tensor<T> ConvUp<T>::operator()(const Tensor<T>& x) const {
  return conv_transpose2d(x, weight, bias, 2, 0);
}

template <typename T>
MultiHeadAttention<T> MultiHeadAttention<T>::make(ParamStore<T>& ps, const std::string& name, std::size_t dim,
                                                  std::size_t heads, Rng& rng) {
  if (heads == 0 || dim / heads == 0 || dim % heads != 0) {
    throw TensorError("attention: dim " + std::to_string(dim) + " not divisible into " + std::to_string(heads) +
                      " heads of nonzero width");
  }
  MultiHeadAttention m;
  m.dim = dim;
  m.heads = heads;
  m.q = Linear<T>::make(ps, name + ".q", dim, dim, rng);
  m.k = Linear<T>::make(ps, name + ".k", dim, dim, rng);
  m.v = Linear<T>::make(ps, name + ".v", dim, dim, rng);
  m.o = Linear<T>::make(ps, name + ".o", dim, dim, rng);
  return m;
}

namespace {

// [B*N, H*d] -> [B*H, N, d]
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t batch, std::size_t heads) {
  const std::size_t n = x.dim(0) / batch, d = x.dim(1) / heads;
  return reshape(permute(reshape(x, {batch, n, heads, d}), {0, 2, 1, 3}), {batch * heads, n, d});
}

template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x, std::size_t batch, std::size_t heads) {
  const std::size_t n = x.dim(1), d = x.dim(2);
  return reshape(permute(reshape(x, {batch, heads, n, d}), {0, 2, 1, 3}), {batch * n, heads * d});
}

constexpr std::size_t kChunkThreshold = std::size_t(1) << 24;
constexpr std::size_t kQueryChunk = 256;

}  // namespace

template <typename T>
Tensor<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::vector<T>* probs_out) {
  const std::size_t bh = q.dim(0), nq = q.dim(1), d = q.dim(2), nk = k.dim(1);
  if (d == 0) throw TensorError("attention: per-head dimension is zero");
  const T inv = T(1) / std::sqrt(static_cast<T>(d));
  if (grad_enabled() || probs_out || bh * nq * nk < kChunkThreshold) {
    auto probs = softmax(scale(bmm(q, permute(k, {0, 2, 1})), inv));
    if (probs_out) probs_out->assign(probs.data().begin(), probs.data().end());
    return bmm(probs, v);
  }
  // Inference-only path for very long sequences.
  std::vector<T> out(bh * nq * d);
  std::vector<T> scores(kQueryChunk * nk);
  const T* qd = q.data().data();
  const T* kd = k.data().data();
  const T* vd = v.data().data();
  for (std::size_t b = 0; b < bh; ++b) {
    for (std::size_t q0 = 0; q0 < nq; q0 += kQueryChunk) {
      const std::size_t rows = std::min(kQueryChunk, nq - q0);
      gemm<T>(false, true, rows, nk, d, inv, qd + (b * nq + q0) * d, kd + b * nk * d, T(0), scores.data());
      for (std::size_t r = 0; r < rows; ++r) {
        T* s = scores.data() + r * nk;
        const T mx = *std::max_element(s, s + nk);
        T total = 0;
        for (std::size_t c = 0; c < nk; ++c) {
          s[c] = std::exp(s[c] - mx);
          total += s[c];
        }
        for (std::size_t c = 0; c < nk; ++c) s[c] /= total;
      }
      gemm<T>(false, false, rows, d, nk, T(1), scores.data(), vd + b * nk * d, T(0), out.data() + (b * nq + q0) * d);
    }
  }
  return Tensor<T>({bh, nq, d}, std::move(out));
}

template <typename T>
Tensor<T> MultiHeadAttention<T>::operator()(const Tensor<T>& q_in, const Tensor<T>& kv_in, std::size_t batch,
                                            AttentionRecord* record) const {
  if (q_in.rank() != 2 || kv_in.rank() != 2 || q_in.dim(0) % batch != 0 || kv_in.dim(0) % batch != 0) {
    throw TensorError("attention: inputs " + shape_str(q_in.shape()) + " and " + shape_str(kv_in.shape()) +
                      " do not split into " + std::to_string(batch) + " sequences");
  }
  auto qh = split_heads(q(q_in), batch, heads);
  auto kh = split_heads(k(kv_in), batch, heads);
  auto vh = split_heads(v(kv_in), batch, heads);
  std::vector<T> probs;
  auto ctx = scaled_dot_attention(qh, kh, vh, record ? &probs : nullptr);
  if (record) {
    const std::size_t nq = qh.dim(1), nk = kh.dim(1);
    record->batch = batch;
    record->queries = nq;
    record->keys = nk;
    record->weights.assign(batch * nq * nk, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t h = 0; h < heads; ++h) {
        const T* p = probs.data() + (b * heads + h) * nq * nk;
        double* dst = record->weights.data() + b * nq * nk;
        for (std::size_t i = 0; i < nq * nk; ++i) dst[i] += static_cast<double>(p[i]) / static_cast<double>(heads);
      }
    }
  }
  return o(merge_heads(ctx, batch, heads));
}

template <typename T>
TransformerLayer<T> TransformerLayer<T>::make(ParamStore<T>& ps, const std::string& name, std::size_t dim,
                                              std::size_t heads, std::size_t hidden, Rng& rng) {
  TransformerLayer l;
  l.ln1 = LayerNorm<T>::make(ps, name + ".ln1", dim, rng);
  l.attn = MultiHeadAttention<T>::make(ps, name + ".attn", dim, heads, rng);
  l.ln2 = LayerNorm<T>::make(ps, name + ".ln2", dim, rng);
  l.ff1 = Linear<T>::make(ps, name + ".ff1", dim, hidden, rng);
  l.ff2 = Linear<T>::make(ps, name + ".ff2", hidden, dim, rng);
  return l;
}

template <typename T>
Tensor<T> TransformerLayer<T>::operator()(const Tensor<T>& x, std::size_t batch, AttentionRecord* record) const {
  auto n1 = ln1(x);
  auto h = add(x, attn(n1, n1, batch, record));
  return add(h, ff2(gelu(ff1(ln2(h)))));
}

template <typename T>
TransformerStack<T> TransformerStack<T>::make(ParamStore<T>& ps, const std::string& name, std::size_t depth,
                                              std::size_t dim, std::size_t heads, std::size_t hidden, Rng& rng) {
  TransformerStack s;
  for (std::size_t i = 0; i < depth; ++i) {
    s.layers.push_back(TransformerLayer<T>::make(ps, name + "." + std::to_string(i), dim, heads, hidden, rng));
  }
  s.final_norm = LayerNorm<T>::make(ps, name + ".norm", dim, rng);
  return s;
}

template <typename T>
Tensor<T> TransformerStack<T>::operator()(const Tensor<T>& x, std::vector<AttentionRecord>* records) const {
  Tensor<T> h = x;
  for (const auto& layer : layers) {
    if (records) {
      records->emplace_back();
      h = layer(h, 1, &records->back());
    } else {
      h = layer(h, 1);
    }
  }
  return final_norm(h);
}

std::string attention_to_csv(const std::vector<AttentionRecord>& records) {
  std::ostringstream os;
  os << "layer,batch,query,key,weight\n";
  for (std::size_t l = 0; l < records.size(); ++l) {
    const auto& r = records[l];
    for (std::size_t b = 0; b < r.batch; ++b)
      for (std::size_t i = 0; i < r.queries; ++i)
        for (std::size_t j = 0; j < r.keys; ++j)
          os << l << ',' << b << ',' << i << ',' << j << ',' << r.weights[(b * r.queries + i) * r.keys + j] << '\n';
  }
  return os.str();
}

template <typename T>
Tensor<T> map_to_rows(const Tensor<T>& x) {
  if (x.rank() != 4 || x.dim(0) != 1) throw TensorError("map_to_rows: expected [1, C, H, W], got " + shape_str(x.shape()));
  const std::size_t c = x.dim(1), hw = x.dim(2) * x.dim(3);
  return transpose(reshape(x, {c, hw}));
}

template <typename T>
Tensor<T> rows_to_map(const Tensor<T>& rows, std::size_t h, std::size_t w) {
  if (rows.rank() != 2 || rows.dim(0) != h * w) {
    throw TensorError("rows_to_map: " + shape_str(rows.shape()) + " is not " + std::to_string(h * w) + " rows");
  }
  return reshape(transpose(rows), {1, rows.dim(1), h, w});
}

#define MF_INSTANTIATE_NN(T)                                                                                 \
  template struct Linear<T>;                                                                                 \
  template struct LayerNorm<T>;                                                                              \
  template struct Conv<T>;                                                                                   \
  template struct ConvUp<T>;                                                                                 \
  template struct MultiHeadAttention<T>;                                                                     \
  template struct TransformerLayer<T>;                                                                       \
  template struct TransformerStack<T>;                                                                       \
  template Tensor<T> scaled_dot_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::vector<T>*); \
  template Tensor<T> map_to_rows(const Tensor<T>&);                                                          \
  template Tensor<T> rows_to_map(const Tensor<T>&, std::size_t, std::size_t);

MF_INSTANTIATE_NN(float)
MF_INSTANTIATE_NN(double)

}  // namespace mf::nn
