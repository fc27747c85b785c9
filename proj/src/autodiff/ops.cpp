#include "mf/autodiff/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace mf {

namespace {

[[noreturn]] void fail(const std::string& op, const std::string& what) {
  throw TensorError(op + ": " + what);
}

template <typename T>
std::vector<T>* parent_grad(Node<T>& self, std::size_t i) {
  if (i >= self.parents.size()) return nullptr;
  auto& p = self.parents[i];
  if (!p || !p->requires_grad) return nullptr;
  return &p->ensure_grad();
}

template <typename T>
const std::vector<T>& parent_data(Node<T>& self, std::size_t i) {
  return self.parents[i]->data;
}

// Elementwise unary op where the local derivative is a function of input x and output y.
template <typename T, typename F, typename D>
Tensor<T> unary(const Tensor<T>& a, const char* op, F f, D df) {
  const auto& x = a.node().data;
  std::vector<T> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return make_result<T>(a.shape(), std::move(y), op, {a}, [df](Node<T>& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    const auto& xin = parent_data(self, 0);
    for (std::size_t i = 0; i < xin.size(); ++i) (*g)[i] += self.grad[i] * df(xin[i], self.data[i]);
  });
}

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

template <typename T>
void im2col(const T* img, std::size_t channels, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
            std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo, T* cols) {
  const std::size_t plane = ho * wo;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        T* row = cols + ((c * kh + ki) * kw + kj) * plane;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ki) - static_cast<std::ptrdiff_t>(pad);
          T* dst = row + oy * wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* src = img + (c * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * stride + kj) - static_cast<std::ptrdiff_t>(pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, std::size_t channels, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
            std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo, T* img) {
  const std::size_t plane = ho * wo;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        const T* row = cols + ((c * kh + ki) * kw + kj) * plane;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ki) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          const T* src = row + oy * wo;
          T* dst = img + (c * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * stride + kj) - static_cast<std::ptrdiff_t>(pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// gemm

template <>
void gemm<float>(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, float alpha,
                 const float* a, const float* b, float beta, float* c) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    for (std::size_t i = 0; i < m * n; ++i) c[i] *= beta;
    return;
  }
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(trans_a ? m : k), b, static_cast<int>(trans_b ? k : n), beta, c,
              static_cast<int>(n));
}

template <>
void gemm<double>(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
                  const double* a, const double* b, double beta, double* c) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    for (std::size_t i = 0; i < m * n; ++i) c[i] *= beta;
    return;
  }
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(trans_a ? m : k), b, static_cast<int>(trans_b ? k : n), beta, c,
              static_cast<int>(n));
}

// ---------------------------------------------------------------------------
// elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape("add", a, b);
  const auto& x = a.node().data;
  const auto& y = b.node().data;
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return make_result<T>(a.shape(), std::move(out), "add", {a, b}, [](Node<T>& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (auto* g = parent_grad(self, p)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape("sub", a, b);
  const auto& x = a.node().data;
  const auto& y = b.node().data;
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return make_result<T>(a.shape(), std::move(out), "sub", {a, b}, [](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape("mul", a, b);
  const auto& x = a.node().data;
  const auto& y = b.node().data;
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return make_result<T>(a.shape(), std::move(out), "mul", {a, b}, [](Node<T>& self) {
    const auto& xa = parent_data(self, 0);
    const auto& xb = parent_data(self, 1);
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * xb[i];
    }
    if (auto* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * xa[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary(a, "scale", [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T value) {
  return unary(a, "add_scalar", [value](T x) { return x + value; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  if (bias.rank() != 1 || x.rank() == 0 || x.shape().back() != bias.dim(0)) {
    fail("add_bias", "trailing axis of " + shape_str(x.shape()) + " does not match bias " + shape_str(bias.shape()));
  }
  const std::size_t c = bias.dim(0);
  const auto& xv = x.node().data;
  const auto& bv = bias.node().data;
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] + bv[i % c];
  return make_result<T>(x.shape(), std::move(out), "add_bias", {x, bias}, [c](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i % c] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul_trailing(const Tensor<T>& x, const Tensor<T>& gain) {
  if (gain.rank() != 1 || x.rank() == 0 || x.shape().back() != gain.dim(0)) {
    fail("mul_trailing", "trailing axis of " + shape_str(x.shape()) + " does not match " + shape_str(gain.shape()));
  }
  const std::size_t c = gain.dim(0);
  const auto& xv = x.node().data;
  const auto& gv = gain.node().data;
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * gv[i % c];
  return make_result<T>(x.shape(), std::move(out), "mul_trailing", {x, gain}, [c](Node<T>& self) {
    const auto& xin = parent_data(self, 0);
    const auto& gin = parent_data(self, 1);
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * gin[i % c];
    }
    if (auto* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i % c] += self.grad[i] * xin[i];
    }
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return unary(a, "relu", [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt2pi = 0.39894228040143267794;
  return unary(
      a, "gelu",
      [](T x) { return static_cast<T>(0.5 * x * (1.0 + std::erf(x * inv_sqrt2))); },
      [](T x, T) {
        const double xd = x;
        return static_cast<T>(0.5 * (1.0 + std::erf(xd * inv_sqrt2)) + xd * inv_sqrt2pi * std::exp(-0.5 * xd * xd));
      });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary(
      a, "sigmoid",
      [](T x) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  return unary(a, "tanh", [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  return unary(a, "exp", [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  for (T v : a.data()) {
    if (!(v > T(0))) fail("log", "non-positive input in tensor of shape " + shape_str(a.shape()));
  }
  return unary(a, "log", [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
  return unary(a, "abs", [](T x) { return std::abs(x); },
               [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  return unary(a, "square", [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Tensor<T> pow_scalar(const Tensor<T>& a, T exponent) {
  return unary(
      a, "pow_scalar", [exponent](T x) { return std::pow(x, exponent); },
      [exponent](T x, T) { return exponent * std::pow(x, exponent - T(1)); });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
  if (!(lo <= hi)) fail("clamp", "lo > hi");
  return unary(
      a, "clamp", [lo, hi](T x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](T x, T) { return (x > lo && x < hi) ? T(1) : T(0); });
}

// ---------------------------------------------------------------------------
// reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  const auto& x = a.node().data;
  T total = T(0);
  for (T v : x) total += v;
  return make_result<T>(Shape{}, {total}, "sum", {a}, [](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (auto& v : *g) v += self.grad[0];
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  const auto n = a.numel();
  if (n == 0) fail("mean", "empty tensor");
  const auto& x = a.node().data;
  T total = T(0);
  for (T v : x) total += v;
  return make_result<T>(Shape{}, {total / static_cast<T>(n)}, "mean", {a}, [n](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      const T d = self.grad[0] / static_cast<T>(n);
      for (auto& v : *g) v += d;
    }
  });
}

template <typename T>
Tensor<T> mean_rows(const Tensor<T>& x) {
  if (x.rank() != 2 || x.dim(0) == 0) fail("mean_rows", "expects non-empty [N, C], got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1);
  const auto& xv = x.node().data;
  std::vector<T> out(c, T(0));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < c; ++j) out[j] += xv[r * c + j];
  for (auto& v : out) v /= static_cast<T>(n);
  return make_result<T>(Shape{c}, std::move(out), "mean_rows", {x}, [n, c](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < c; ++j) (*g)[r * c + j] += self.grad[j] / static_cast<T>(n);
    }
  });
}

// ---------------------------------------------------------------------------
// shape

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    fail("reshape", "cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  return make_result<T>(std::move(shape), a.node().data, "reshape", {a}, [](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) fail("transpose", "expects a matrix, got " + shape_str(a.shape()));
  return permute(a, {1, 0});
}

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& axes) {
  const auto& in_shape = a.shape();
  const std::size_t r = in_shape.size();
  if (axes.size() != r) fail("permute", "axes count does not match " + shape_str(in_shape));
  std::vector<bool> seen(r, false);
  for (auto ax : axes) {
    if (ax >= r || seen[ax]) fail("permute", "invalid axis permutation for " + shape_str(in_shape));
    seen[ax] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = in_shape[axes[i]];
  const auto in_strides = strides_of(in_shape);
  // src_stride[i]: input stride of the axis that becomes output axis i.
  std::vector<std::size_t> src_stride(r);
  for (std::size_t i = 0; i < r; ++i) src_stride[i] = in_strides[axes[i]];

  const std::size_t n = a.numel();
  std::vector<std::size_t> gather(n);
  std::vector<std::size_t> counter(r, 0);
  std::size_t offset = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    gather[flat] = offset;
    for (std::size_t ax = r; ax-- > 0;) {
      if (++counter[ax] < out_shape[ax]) {
        offset += src_stride[ax];
        break;
      }
      offset -= src_stride[ax] * (out_shape[ax] - 1);
      counter[ax] = 0;
    }
  }
  const auto& x = a.node().data;
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = x[gather[i]];
  return make_result<T>(out_shape, std::move(out), "permute", {a}, [gather = std::move(gather)](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < gather.size(); ++i) (*g)[gather[i]] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) fail("concat", "no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) fail("concat", "axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) fail("concat", "shape mismatch " + shape_str(first) + " vs " + shape_str(s) + " along axis " + std::to_string(axis));
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];

  std::vector<std::size_t> widths;
  for (const auto& p : parts) widths.push_back(p.shape()[axis] * inner);
  const std::size_t row = out_shape[axis] * inner;
  std::vector<T> out(shape_numel(out_shape));
  std::size_t col = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& src = parts[k].node().data;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.begin() + o * widths[k], widths[k], out.begin() + o * row + col);
    }
    col += widths[k];
  }
  return make_result<T>(out_shape, std::move(out), "concat", parts, [widths, outer, row](Node<T>& self) {
    std::size_t c = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (auto* g = parent_grad(self, k)) {
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < widths[k]; ++i) (*g)[o * widths[k] + i] += self.grad[o * row + c + i];
      }
      c += widths[k];
    }
  });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& s = a.shape();
  if (axis >= s.size() || start + length > s[axis]) {
    fail("slice", "range [" + std::to_string(start) + ", " + std::to_string(start + length) + ") on axis " +
                      std::to_string(axis) + " exceeds " + shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  Shape out_shape = s;
  out_shape[axis] = length;
  const std::size_t in_row = s[axis] * inner, out_row = length * inner, off = start * inner;
  const auto& x = a.node().data;
  std::vector<T> out(outer * out_row);
  for (std::size_t o = 0; o < outer; ++o) std::copy_n(x.begin() + o * in_row + off, out_row, out.begin() + o * out_row);
  return make_result<T>(out_shape, std::move(out), "slice", {a}, [outer, in_row, out_row, off](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < out_row; ++i) (*g)[o * in_row + off + i] += self.grad[o * out_row + i];
    }
  });
}

template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& a, std::size_t axis, const std::vector<std::size_t>& sizes) {
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  if (axis >= a.rank() || total != a.dim(axis)) {
    fail("split", "sizes sum to " + std::to_string(total) + " but axis " + std::to_string(axis) + " of " +
                      shape_str(a.shape()) + " differs");
  }
  std::vector<Tensor<T>> out;
  std::size_t start = 0;
  for (auto len : sizes) {
    out.push_back(slice(a, axis, start, len));
    start += len;
  }
  return out;
}

template <typename T>
Tensor<T> index_select(const Tensor<T>& a, const std::vector<std::size_t>& rows) {
  if (a.rank() == 0) fail("index_select", "scalar input");
  const std::size_t n = a.dim(0);
  const std::size_t inner = n ? a.numel() / n : 0;
  for (auto r : rows) {
    if (r >= n) fail("index_select", "row " + std::to_string(r) + " out of range for " + shape_str(a.shape()));
  }
  Shape out_shape = a.shape();
  out_shape[0] = rows.size();
  const auto& x = a.node().data;
  std::vector<T> out(rows.size() * inner);
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(x.begin() + rows[i] * inner, inner, out.begin() + i * inner);
  return make_result<T>(out_shape, std::move(out), "index_select", {a}, [rows, inner](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < inner; ++j) (*g)[rows[i] * inner + j] += self.grad[i * inner + j];
    }
  });
}

template <typename T>
Tensor<T> broadcast_rows(const Tensor<T>& v, std::size_t n) {
  if (v.rank() != 1) fail("broadcast_rows", "expects a vector, got " + shape_str(v.shape()));
  const std::size_t c = v.dim(0);
  const auto& x = v.node().data;
  std::vector<T> out(n * c);
  for (std::size_t r = 0; r < n; ++r) std::copy(x.begin(), x.end(), out.begin() + r * c);
  return make_result<T>(Shape{n, c}, std::move(out), "broadcast_rows", {v}, [n, c](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < c; ++j) (*g)[j] += self.grad[r * c + j];
    }
  });
}

// ---------------------------------------------------------------------------
// linear algebra

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    fail("matmul", "incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n, T(0));
  gemm<T>(false, false, m, n, k, T(1), a.node().data.data(), b.node().data.data(), T(0), out.data());
  return make_result<T>(Shape{m, n}, std::move(out), "matmul", {a, b}, [m, k, n](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      gemm<T>(false, true, m, k, n, T(1), self.grad.data(), parent_data(self, 1).data(), T(1), g->data());
    }
    if (auto* g = parent_grad(self, 1)) {
      gemm<T>(true, false, k, n, m, T(1), parent_data(self, 0).data(), self.grad.data(), T(1), g->data());
    }
  });
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
    fail("bmm", "incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  std::vector<T> out(batch * m * n, T(0));
  const auto& av = a.node().data;
  const auto& bv = b.node().data;
  for (std::size_t i = 0; i < batch; ++i) {
    gemm<T>(false, false, m, n, k, T(1), av.data() + i * m * k, bv.data() + i * k * n, T(0), out.data() + i * m * n);
  }
  return make_result<T>(Shape{batch, m, n}, std::move(out), "bmm", {a, b}, [batch, m, k, n](Node<T>& self) {
    const auto& ad = parent_data(self, 0);
    const auto& bd = parent_data(self, 1);
    auto* ga = parent_grad(self, 0);
    auto* gb = parent_grad(self, 1);
    for (std::size_t i = 0; i < batch; ++i) {
      const T* dy = self.grad.data() + i * m * n;
      if (ga) gemm<T>(false, true, m, k, n, T(1), dy, bd.data() + i * k * n, T(1), ga->data() + i * m * k);
      if (gb) gemm<T>(true, false, k, n, m, T(1), ad.data() + i * m * k, dy, T(1), gb->data() + i * k * n);
    }
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& a) {
  if (a.rank() == 0 || a.shape().back() == 0) fail("softmax", "needs a non-empty last axis, got " + shape_str(a.shape()));
  const std::size_t c = a.shape().back();
  const std::size_t rows = a.numel() / c;
  const auto& x = a.node().data;
  std::vector<T> y(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * c;
    T* yr = y.data() + r * c;
    const T mx = *std::max_element(xr, xr + c);
    T total = T(0);
    for (std::size_t j = 0; j < c; ++j) total += (yr[j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < c; ++j) yr[j] /= total;
  }
  return make_result<T>(a.shape(), std::move(y), "softmax", {a}, [rows, c](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t r = 0; r < rows; ++r) {
        const T* yr = self.data.data() + r * c;
        const T* dy = self.grad.data() + r * c;
        T dot = T(0);
        for (std::size_t j = 0; j < c; ++j) dot += dy[j] * yr[j];
        for (std::size_t j = 0; j < c; ++j) (*g)[r * c + j] += yr[j] * (dy[j] - dot);
      }
    }
  });
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& a) {
  if (a.rank() == 0 || a.shape().back() == 0) fail("log_softmax", "needs a non-empty last axis, got " + shape_str(a.shape()));
  const std::size_t c = a.shape().back();
  const std::size_t rows = a.numel() / c;
  const auto& x = a.node().data;
  std::vector<T> y(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * c;
    const T mx = *std::max_element(xr, xr + c);
    T total = T(0);
    for (std::size_t j = 0; j < c; ++j) total += std::exp(xr[j] - mx);
    const T lse = mx + std::log(total);
    for (std::size_t j = 0; j < c; ++j) y[r * c + j] = xr[j] - lse;
  }
  return make_result<T>(a.shape(), std::move(y), "log_softmax", {a}, [rows, c](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t r = 0; r < rows; ++r) {
        const T* yr = self.data.data() + r * c;
        const T* dy = self.grad.data() + r * c;
        T total = T(0);
        for (std::size_t j = 0; j < c; ++j) total += dy[j];
        for (std::size_t j = 0; j < c; ++j) (*g)[r * c + j] += dy[j] - std::exp(yr[j]) * total;
      }
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  if (x.rank() == 0) fail("layer_norm", "scalar input");
  const std::size_t c = x.shape().back();
  if (gain.shape() != Shape{c} || bias.shape() != Shape{c}) {
    fail("layer_norm", "input " + shape_str(x.shape()) + " vs gain " + shape_str(gain.shape()) + " / bias " +
                           shape_str(bias.shape()));
  }
  const std::size_t rows = x.numel() / c;
  const auto& xv = x.node().data;
  const auto& gv = gain.node().data;
  const auto& bv = bias.node().data;
  std::vector<T> y(xv.size()), xhat(xv.size()), rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.data() + r * c;
    T mu = T(0);
    for (std::size_t j = 0; j < c; ++j) mu += xr[j];
    mu /= static_cast<T>(c);
    T var = T(0);
    for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<T>(c);
    rstd[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[r * c + j] = (xr[j] - mu) * rstd[r];
      y[r * c + j] = xhat[r * c + j] * gv[j] + bv[j];
    }
  }
  return make_result<T>(x.shape(), std::move(y), "layer_norm", {x, gain, bias},
                        [rows, c, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& self) {
                          const auto& g = parent_data(self, 1);
                          auto* gx = parent_grad(self, 0);
                          auto* gg = parent_grad(self, 1);
                          auto* gb = parent_grad(self, 2);
                          for (std::size_t r = 0; r < rows; ++r) {
                            const T* dy = self.grad.data() + r * c;
                            const T* xh = xhat.data() + r * c;
                            if (gg || gb) {
                              for (std::size_t j = 0; j < c; ++j) {
                                if (gg) (*gg)[j] += dy[j] * xh[j];
                                if (gb) (*gb)[j] += dy[j];
                              }
                            }
                            if (gx) {
                              T m1 = T(0), m2 = T(0);
                              for (std::size_t j = 0; j < c; ++j) {
                                const T d = dy[j] * g[j];
                                m1 += d;
                                m2 += d * xh[j];
                              }
                              m1 /= static_cast<T>(c);
                              m2 /= static_cast<T>(c);
                              for (std::size_t j = 0; j < c; ++j) {
                                (*gx)[r * c + j] += rstd[r] * (dy[j] * g[j] - m1 - xh[j] * m2);
                              }
                            }
                          }
                        });
}

// ---------------------------------------------------------------------------
// convolution and pooling

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::size_t stride,
                 std::size_t padding) {
  if (x.rank() != 4 || w.rank() != 4 || x.dim(1) != w.dim(1) || stride == 0) {
    fail("conv2d", "input " + shape_str(x.shape()) + " incompatible with kernel " + shape_str(w.shape()));
  }
  const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (h + 2 * padding < kh || wd + 2 * padding < kw) {
    fail("conv2d", "kernel " + shape_str(w.shape()) + " larger than padded input " + shape_str(x.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{co}) {
    fail("conv2d", "bias " + shape_str(bias.shape()) + " does not match kernel " + shape_str(w.shape()));
  }
  const std::size_t ho = (h + 2 * padding - kh) / stride + 1;
  const std::size_t wo = (wd + 2 * padding - kw) / stride + 1;
  const std::size_t kdim = ci * kh * kw, plane = ho * wo;
  std::vector<T> cols(kdim * plane);
  std::vector<T> out(n * co * plane);
  const auto& xv = x.node().data;
  const auto& wv = w.node().data;
  for (std::size_t b = 0; b < n; ++b) {
    im2col(xv.data() + b * ci * h * wd, ci, h, wd, kh, kw, stride, padding, ho, wo, cols.data());
    T* ob = out.data() + b * co * plane;
    gemm<T>(false, false, co, plane, kdim, T(1), wv.data(), cols.data(), T(0), ob);
    if (bias.defined()) {
      const auto& bv = bias.node().data;
      for (std::size_t c = 0; c < co; ++c)
        for (std::size_t p = 0; p < plane; ++p) ob[c * plane + p] += bv[c];
    }
  }
  std::vector<Tensor<T>> parents{x, w};
  if (bias.defined()) parents.push_back(bias);
  return make_result<T>(Shape{n, co, ho, wo}, std::move(out), "conv2d", parents,
                        [=](Node<T>& self) {
                          const auto& xin = parent_data(self, 0);
                          const auto& win = parent_data(self, 1);
                          auto* gx = parent_grad(self, 0);
                          auto* gw = parent_grad(self, 1);
                          auto* gb = parent_grad(self, 2);
                          std::vector<T> c(kdim * plane);
                          for (std::size_t b = 0; b < n; ++b) {
                            const T* dy = self.grad.data() + b * co * plane;
                            if (gw) {
                              im2col(xin.data() + b * ci * h * wd, ci, h, wd, kh, kw, stride, padding, ho, wo, c.data());
                              gemm<T>(false, true, co, kdim, plane, T(1), dy, c.data(), T(1), gw->data());
                            }
                            if (gb) {
                              for (std::size_t k = 0; k < co; ++k)
                                for (std::size_t p = 0; p < plane; ++p) (*gb)[k] += dy[k * plane + p];
                            }
                            if (gx) {
                              gemm<T>(true, false, kdim, plane, co, T(1), win.data(), dy, T(0), c.data());
                              col2im(c.data(), ci, h, wd, kh, kw, stride, padding, ho, wo, gx->data() + b * ci * h * wd);
                            }
                          }
                        });
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::size_t stride,
                           std::size_t padding) {
  if (x.rank() != 4 || w.rank() != 4 || x.dim(1) != w.dim(0) || stride == 0) {
    fail("conv_transpose2d", "input " + shape_str(x.shape()) + " incompatible with kernel " + shape_str(w.shape()));
  }
  const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t co = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  if ((h - 1) * stride + kh < 2 * padding + 1 || (wd - 1) * stride + kw < 2 * padding + 1) {
    fail("conv_transpose2d", "padding too large for " + shape_str(x.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{co}) {
    fail("conv_transpose2d", "bias " + shape_str(bias.shape()) + " does not match kernel " + shape_str(w.shape()));
  }
  const std::size_t ho = (h - 1) * stride + kh - 2 * padding;
  const std::size_t wo = (wd - 1) * stride + kw - 2 * padding;
  const std::size_t kdim = co * kh * kw, plane = h * wd, oplane = ho * wo;
  std::vector<T> cols(kdim * plane);
  std::vector<T> out(n * co * oplane, T(0));
  const auto& xv = x.node().data;
  const auto& wv = w.node().data;
  for (std::size_t b = 0; b < n; ++b) {
    gemm<T>(true, false, kdim, plane, ci, T(1), wv.data(), xv.data() + b * ci * plane, T(0), cols.data());
    T* ob = out.data() + b * co * oplane;
    col2im(cols.data(), co, ho, wo, kh, kw, stride, padding, h, wd, ob);
    if (bias.defined()) {
      const auto& bv = bias.node().data;
      for (std::size_t c = 0; c < co; ++c)
        for (std::size_t p = 0; p < oplane; ++p) ob[c * oplane + p] += bv[c];
    }
  }
  std::vector<Tensor<T>> parents{x, w};
  if (bias.defined()) parents.push_back(bias);
  return make_result<T>(Shape{n, co, ho, wo}, std::move(out), "conv_transpose2d", parents,
                        [=](Node<T>& self) {
                          const auto& xin = parent_data(self, 0);
                          const auto& win = parent_data(self, 1);
                          auto* gx = parent_grad(self, 0);
                          auto* gw = parent_grad(self, 1);
                          auto* gb = parent_grad(self, 2);
                          std::vector<T> c(kdim * plane);
                          for (std::size_t b = 0; b < n; ++b) {
                            const T* dy = self.grad.data() + b * co * oplane;
                            if (gb) {
                              for (std::size_t k = 0; k < co; ++k)
                                for (std::size_t p = 0; p < oplane; ++p) (*gb)[k] += dy[k * oplane + p];
                            }
                            if (!gx && !gw) continue;
                            im2col(dy, co, ho, wo, kh, kw, stride, padding, h, wd, c.data());
                            if (gx) gemm<T>(false, false, ci, plane, kdim, T(1), win.data(), c.data(), T(1), gx->data() + b * ci * plane);
                            if (gw) gemm<T>(false, true, ci, kdim, plane, T(1), xin.data() + b * ci * plane, c.data(), T(1), gw->data());
                          }
                        });
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::size_t kernel, std::size_t stride) {
  if (x.rank() != 4 || kernel == 0 || stride == 0 || x.dim(2) < kernel || x.dim(3) < kernel) {
    fail("max_pool2d", "invalid input " + shape_str(x.shape()) + " for kernel " + std::to_string(kernel));
  }
  const std::size_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = (h - kernel) / stride + 1, wo = (w - kernel) / stride + 1;
  const auto& xv = x.node().data;
  std::vector<T> out(nc * ho * wo);
  std::vector<std::size_t> arg(out.size());
  for (std::size_t p = 0; p < nc; ++p) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::size_t best = p * h * w + oy * stride * w + ox * stride;
        for (std::size_t ky = 0; ky < kernel; ++ky)
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const std::size_t idx = p * h * w + (oy * stride + ky) * w + ox * stride + kx;
            if (xv[idx] > xv[best]) best = idx;
          }
        const std::size_t o = (p * ho + oy) * wo + ox;
        out[o] = xv[best];
        arg[o] = best;
      }
    }
  }
  return make_result<T>(Shape{x.dim(0), x.dim(1), ho, wo}, std::move(out), "max_pool2d", {x},
                        [arg = std::move(arg)](Node<T>& self) {
                          if (auto* g = parent_grad(self, 0)) {
                            for (std::size_t i = 0; i < arg.size(); ++i) (*g)[arg[i]] += self.grad[i];
                          }
                        });
}

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, std::size_t kernel, std::size_t stride) {
  if (x.rank() != 4 || kernel == 0 || stride == 0 || x.dim(2) < kernel || x.dim(3) < kernel) {
    fail("avg_pool2d", "invalid input " + shape_str(x.shape()) + " for kernel " + std::to_string(kernel));
  }
  const std::size_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = (h - kernel) / stride + 1, wo = (w - kernel) / stride + 1;
  const T inv = T(1) / static_cast<T>(kernel * kernel);
  const auto& xv = x.node().data;
  std::vector<T> out(nc * ho * wo, T(0));
  for (std::size_t p = 0; p < nc; ++p)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        T acc = T(0);
        for (std::size_t ky = 0; ky < kernel; ++ky)
          for (std::size_t kx = 0; kx < kernel; ++kx) acc += xv[p * h * w + (oy * stride + ky) * w + ox * stride + kx];
        out[(p * ho + oy) * wo + ox] = acc * inv;
      }
  return make_result<T>(Shape{x.dim(0), x.dim(1), ho, wo}, std::move(out), "avg_pool2d", {x},
                        [=](Node<T>& self) {
                          if (auto* g = parent_grad(self, 0)) {
                            for (std::size_t p = 0; p < nc; ++p)
                              for (std::size_t oy = 0; oy < ho; ++oy)
                                for (std::size_t ox = 0; ox < wo; ++ox) {
                                  const T d = self.grad[(p * ho + oy) * wo + ox] * inv;
                                  for (std::size_t ky = 0; ky < kernel; ++ky)
                                    for (std::size_t kx = 0; kx < kernel; ++kx)
                                      (*g)[p * h * w + (oy * stride + ky) * w + ox * stride + kx] += d;
                                }
                          }
                        });
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, const std::vector<std::size_t>& ids) {
  if (table.rank() != 2) fail("embedding", "table must be [V, C], got " + shape_str(table.shape()));
  return index_select(table, ids);
}

// ---------------------------------------------------------------------------
// sparse map

void SparseMap::add_row(const std::vector<std::pair<std::size_t, double>>& entries) {
  for (const auto& [i, w] : entries) {
    index.push_back(i);
    weight.push_back(w);
  }
  offsets.push_back(index.size());
  rows_out = offsets.size() - 1;
}

SparseMap SparseMap::transposed() const {
  std::vector<std::vector<std::pair<std::size_t, double>>> rows(rows_in);
  for (std::size_t r = 0; r < rows_out; ++r)
    for (std::size_t k = offsets[r]; k < offsets[r + 1]; ++k) rows[index[k]].emplace_back(r, weight[k]);
  SparseMap t;
  t.rows_in = rows_out;
  for (const auto& row : rows) t.add_row(row);
  return t;
}

template <typename T>
Tensor<T> sparse_map(const Tensor<T>& x, const SparseMap& map) {
  if (x.rank() != 2 || x.dim(0) != map.rows_in) {
    fail("sparse_map", "input " + shape_str(x.shape()) + " does not have " + std::to_string(map.rows_in) + " rows");
  }
  const std::size_t c = x.dim(1);
  const auto& xv = x.node().data;
  std::vector<T> out(map.rows_out * c, T(0));
  for (std::size_t r = 0; r < map.rows_out; ++r)
    for (std::size_t k = map.offsets[r]; k < map.offsets[r + 1]; ++k) {
      const T wgt = static_cast<T>(map.weight[k]);
      const T* src = xv.data() + map.index[k] * c;
      T* dst = out.data() + r * c;
      for (std::size_t j = 0; j < c; ++j) dst[j] += wgt * src[j];
    }
  return make_result<T>(Shape{map.rows_out, c}, std::move(out), "sparse_map", {x}, [map, c](Node<T>& self) {
    if (auto* g = parent_grad(self, 0)) {
      for (std::size_t r = 0; r < map.rows_out; ++r)
        for (std::size_t k = map.offsets[r]; k < map.offsets[r + 1]; ++k) {
          const T wgt = static_cast<T>(map.weight[k]);
          T* dst = g->data() + map.index[k] * c;
          const T* src = self.grad.data() + r * c;
          for (std::size_t j = 0; j < c; ++j) dst[j] += wgt * src[j];
        }
    }
  });
}

// ---------------------------------------------------------------------------

#define MF_INSTANTIATE_OPS(T)                                                                         \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                          \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                          \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                          \
  template Tensor<T> scale(const Tensor<T>&, T);                                                       \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                                  \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> mul_trailing(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> relu(const Tensor<T>&);                                                           \
  template Tensor<T> gelu(const Tensor<T>&);                                                           \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                        \
  template Tensor<T> tanh(const Tensor<T>&);                                                           \
  template Tensor<T> exp(const Tensor<T>&);                                                            \
  template Tensor<T> log(const Tensor<T>&);                                                            \
  template Tensor<T> abs(const Tensor<T>&);                                                            \
  template Tensor<T> square(const Tensor<T>&);                                                         \
  template Tensor<T> pow_scalar(const Tensor<T>&, T);                                                  \
  template Tensor<T> clamp(const Tensor<T>&, T, T);                                                    \
  template Tensor<T> sum(const Tensor<T>&);                                                            \
  template Tensor<T> mean(const Tensor<T>&);                                                           \
  template Tensor<T> mean_rows(const Tensor<T>&);                                                      \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                 \
  template Tensor<T> transpose(const Tensor<T>&);                                                      \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);                       \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                               \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);                   \
  template std::vector<Tensor<T>> split(const Tensor<T>&, std::size_t, const std::vector<std::size_t>&); \
  template Tensor<T> index_select(const Tensor<T>&, const std::vector<std::size_t>&);                  \
  template Tensor<T> broadcast_rows(const Tensor<T>&, std::size_t);                                    \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> bmm(const Tensor<T>&, const Tensor<T>&);                                          \
  template Tensor<T> softmax(const Tensor<T>&);                                                        \
  template Tensor<T> log_softmax(const Tensor<T>&);                                                    \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);              \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t); \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, \
                                      std::size_t);                                                    \
  template Tensor<T> max_pool2d(const Tensor<T>&, std::size_t, std::size_t);                           \
  template Tensor<T> avg_pool2d(const Tensor<T>&, std::size_t, std::size_t);                           \
  template Tensor<T> embedding(const Tensor<T>&, const std::vector<std::size_t>&);                     \
  template Tensor<T> sparse_map(const Tensor<T>&, const SparseMap&);

MF_INSTANTIATE_OPS(float)
MF_INSTANTIATE_OPS(double)

}  // namespace mf
