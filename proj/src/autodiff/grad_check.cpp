#include "mf/autodiff/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mf/autodiff/ops.hpp"
#include "mf/autodiff/rng.hpp"

namespace mf {

namespace {

void require_finite(const Tensord& t, const char* where) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) throw TensorError(std::string("grad_check: non-finite value in ") + where);
  }
}

double projected(const GradFn& fn, const std::vector<Tensord>& inputs, const std::vector<double>& proj) {
  NoGradGuard guard;
  Tensord out = fn(inputs);
  require_finite(out, "forward output");
  double total = 0.0;
  auto d = out.data();
  for (std::size_t i = 0; i < d.size(); ++i) total += d[i] * proj[i];
  return total;
}

Tensord random_tensor(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(s));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensord(s, std::move(v), true);
}

// Values bounded away from zero so kinks (relu, abs) are not straddled.
Tensord away_from_zero(const Shape& s, Rng& rng) {
  std::vector<double> v(shape_numel(s));
  for (auto& x : v) x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.5);
  return Tensord(s, std::move(v), true);
}

// Distinct, well separated values so pooling argmax never flips under perturbation.
Tensord separated(const Shape& s, Rng& rng) {
  const std::size_t n = shape_numel(s);
  std::vector<double> v(n);
  std::iota(v.begin(), v.end(), 0.0);
  for (std::size_t i = n; i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
  for (auto& x : v) x = x * 0.05 - 0.025 * static_cast<double>(n);
  return Tensord(s, std::move(v), true);
}

Shape shape_or(const std::vector<Shape>& shapes, std::size_t i, Shape fallback) {
  return i < shapes.size() ? shapes[i] : fallback;
}

}  // namespace

GradCheckResult grad_check(const GradFn& fn, std::vector<Tensord> inputs, std::uint64_t seed, double step) {
  Rng rng(seed);
  Rng proj_rng = rng.split(0xC0FFEE);
  for (auto& in : inputs) {
    in = Tensord(in.shape(), std::vector<double>(in.data().begin(), in.data().end()), true);
  }
  Tensord out = fn(inputs);
  require_finite(out, "forward output");
  std::vector<double> proj(out.numel());
  for (auto& p : proj) p = proj_rng.uniform(-1.0, 1.0);
  Tensord r(out.shape(), proj);
  Tensord loss = sum(mul(out, r));
  loss.backward();

  GradCheckResult result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto& in = inputs[k];
    std::vector<double> analytic(in.numel(), 0.0);
    if (in.has_grad()) std::copy(in.grad().begin(), in.grad().end(), analytic.begin());
    for (std::size_t i = 0; i < in.numel(); ++i) {
      const double orig = in.data()[i];
      in.data()[i] = orig + step;
      const double fp = projected(fn, inputs, proj);
      in.data()[i] = orig - step;
      const double fm = projected(fn, inputs, proj);
      in.data()[i] = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      if (!std::isfinite(analytic[i])) throw TensorError("grad_check: non-finite analytic gradient");
      const double rel = std::abs(analytic[i] - numeric) / std::max(std::abs(numeric), 1e-8);
      result.max_rel_error = std::max(result.max_rel_error, rel);
      ++result.elements;
    }
  }
  return result;
}

double grad_check_op(const std::string& op, const std::vector<Shape>& shapes, std::uint64_t seed) {
  if (shapes.empty()) throw TensorError("grad_check_op: no input shape for " + op);
  Rng rng = Rng(seed).split(0xDA7A);
  const Shape& s = shapes[0];
  auto run = [&](const GradFn& fn, std::vector<Tensord> in) { return grad_check(fn, std::move(in), seed).max_rel_error; };

  if (op == "matmul") {
    return run([](const auto& v) { return matmul(v[0], v[1]); },
               {random_tensor(s, rng), random_tensor(shape_or(shapes, 1, {s.at(1), 4}), rng)});
  }
  if (op == "bmm") {
    return run([](const auto& v) { return bmm(v[0], v[1]); },
               {random_tensor(s, rng), random_tensor(shape_or(shapes, 1, {s.at(0), s.at(2), 3}), rng)});
  }
  if (op == "add") return run([](const auto& v) { return add(v[0], v[1]); }, {random_tensor(s, rng), random_tensor(s, rng)});
  if (op == "sub") return run([](const auto& v) { return sub(v[0], v[1]); }, {random_tensor(s, rng), random_tensor(s, rng)});
  if (op == "mul") return run([](const auto& v) { return mul(v[0], v[1]); }, {random_tensor(s, rng), random_tensor(s, rng)});
  if (op == "scale") return run([](const auto& v) { return scale(v[0], 1.7); }, {random_tensor(s, rng)});
  if (op == "add_bias") {
    return run([](const auto& v) { return add_bias(v[0], v[1]); }, {random_tensor(s, rng), random_tensor({s.back()}, rng)});
  }
  if (op == "mul_trailing") {
    return run([](const auto& v) { return mul_trailing(v[0], v[1]); }, {random_tensor(s, rng), random_tensor({s.back()}, rng)});
  }
  if (op == "reshape") {
    const std::size_t n = shape_numel(s);
    return run([n](const auto& v) { return reshape(v[0], {n}); }, {random_tensor(s, rng)});
  }
  if (op == "transpose") return run([](const auto& v) { return transpose(v[0]); }, {random_tensor(s, rng)});
  if (op == "permute") {
    std::vector<std::size_t> axes(s.size());
    std::iota(axes.rbegin(), axes.rend(), 0);
    return run([axes](const auto& v) { return permute(v[0], axes); }, {random_tensor(s, rng)});
  }
  if (op == "concat") {
    Shape other = s;
    other[0] += 1;
    return run([](const auto& v) { return concat<double>({v[0], v[1]}, 0); }, {random_tensor(s, rng), random_tensor(other, rng)});
  }
  if (op == "slice") {
    const std::size_t len = std::max<std::size_t>(1, s[0] / 2);
    const std::size_t start = s[0] - len;
    return run([start, len](const auto& v) { return slice(v[0], 0, start, len); }, {random_tensor(s, rng)});
  }
  if (op == "split") {
    const std::size_t a = s[0] / 2;
    const std::size_t b = s[0] - a;
    return run([a, b](const auto& v) {
      auto parts = split(v[0], 0, {a, b});
      return concat<double>({parts[1], parts[0]}, 0);
    }, {random_tensor(s, rng)});
  }
  if (op == "index_select" || op == "embedding") {
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < s[0] + 2; ++i) ids.push_back(rng.below(s[0]));
    if (op == "embedding") return run([ids](const auto& v) { return embedding(v[0], ids); }, {random_tensor(s, rng)});
    return run([ids](const auto& v) { return index_select(v[0], ids); }, {random_tensor(s, rng)});
  }
  if (op == "broadcast_rows") return run([](const auto& v) { return broadcast_rows(v[0], 3); }, {random_tensor(s, rng)});
  if (op == "softmax") return run([](const auto& v) { return softmax(v[0]); }, {random_tensor(s, rng, -2.0, 2.0)});
  if (op == "log_softmax") return run([](const auto& v) { return log_softmax(v[0]); }, {random_tensor(s, rng, -2.0, 2.0)});
  if (op == "layer_norm") {
    const Shape c{s.back()};
    return run([](const auto& v) { return layer_norm(v[0], v[1], v[2]); },
               {random_tensor(s, rng, -2.0, 2.0), random_tensor(c, rng, 0.5, 1.5), random_tensor(c, rng)});
  }
  if (op == "gelu") return run([](const auto& v) { return gelu(v[0]); }, {random_tensor(s, rng, -2.0, 2.0)});
  if (op == "relu") return run([](const auto& v) { return relu(v[0]); }, {away_from_zero(s, rng)});
  if (op == "abs") return run([](const auto& v) { return abs(v[0]); }, {away_from_zero(s, rng)});
  if (op == "sigmoid") return run([](const auto& v) { return sigmoid(v[0]); }, {random_tensor(s, rng, -3.0, 3.0)});
  if (op == "tanh") return run([](const auto& v) { return tanh(v[0]); }, {random_tensor(s, rng, -2.0, 2.0)});
  if (op == "exp") return run([](const auto& v) { return exp(v[0]); }, {random_tensor(s, rng)});
  if (op == "log") return run([](const auto& v) { return log(v[0]); }, {random_tensor(s, rng, 0.5, 2.0)});
  if (op == "square") return run([](const auto& v) { return square(v[0]); }, {random_tensor(s, rng)});
  if (op == "pow_scalar") return run([](const auto& v) { return pow_scalar(v[0], 2.5); }, {random_tensor(s, rng, 0.5, 2.0)});
  if (op == "sum") return run([](const auto& v) { return sum(v[0]); }, {random_tensor(s, rng)});
  if (op == "mean") return run([](const auto& v) { return mean(v[0]); }, {random_tensor(s, rng)});
  if (op == "mean_rows") return run([](const auto& v) { return mean_rows(v[0]); }, {random_tensor(s, rng)});
  if (op == "conv2d" || op == "conv2d_stride2") {
    const std::size_t stride = op == "conv2d" ? 1 : 2;
    const Shape k = shape_or(shapes, 1, {3, s.at(1), 3, 3});
    return run([stride](const auto& v) { return conv2d(v[0], v[1], v[2], stride, 1); },
               {random_tensor(s, rng), random_tensor(k, rng), random_tensor({k[0]}, rng)});
  }
  if (op == "conv2d_valid") {
    const Shape k = shape_or(shapes, 1, {2, s.at(1), 3, 3});
    return run([](const auto& v) { return conv2d(v[0], v[1], Tensord(), 1, 0); },
               {random_tensor(s, rng), random_tensor(k, rng)});
  }
  if (op == "conv_transpose2d") {
    const Shape k = shape_or(shapes, 1, {s.at(1), 3, 2, 2});
    return run([](const auto& v) { return conv_transpose2d(v[0], v[1], v[2], 2, 0); },
               {random_tensor(s, rng), random_tensor(k, rng), random_tensor({k[1]}, rng)});
  }
  if (op == "max_pool2d") return run([](const auto& v) { return max_pool2d(v[0], 2, 2); }, {separated(s, rng)});
  if (op == "avg_pool2d") return run([](const auto& v) { return avg_pool2d(v[0], 2, 2); }, {random_tensor(s, rng)});
  if (op == "sparse_map") {
    SparseMap map;
    map.rows_in = s[0];
    for (std::size_t r = 0; r < s[0] + 1; ++r) {
      map.add_row({{rng.below(s[0]), rng.uniform()}, {rng.below(s[0]), rng.uniform()}});
    }
    return run([map](const auto& v) { return sparse_map(v[0], map); }, {random_tensor(s, rng)});
  }
  throw TensorError("grad_check_op: unknown op '" + op + "'");
}

std::vector<CatalogCase> catalog_cases() {
  return {
      {"matmul", {{2, 3}, {3, 4}}},   {"bmm", {{2, 3, 4}}},          {"add", {{2, 5}}},
      {"sub", {{2, 5}}},              {"mul", {{2, 5}}},             {"scale", {{3, 4}}},
      {"add_bias", {{3, 4}}},         {"mul_trailing", {{3, 4}}},    {"reshape", {{2, 3, 4}}},
      {"transpose", {{3, 5}}},        {"permute", {{2, 3, 4}}},      {"concat", {{2, 3}}},
      {"slice", {{4, 3}}},            {"split", {{5, 2}}},           {"index_select", {{4, 3}}},
      {"embedding", {{6, 4}}},        {"broadcast_rows", {{5}}},     {"softmax", {{2, 5}}},
      {"log_softmax", {{2, 5}}},      {"layer_norm", {{3, 8}}},      {"gelu", {{3, 4}}},
      {"relu", {{3, 4}}},             {"abs", {{3, 4}}},             {"sigmoid", {{3, 4}}},
      {"tanh", {{3, 4}}},             {"exp", {{3, 4}}},             {"log", {{3, 4}}},
      {"square", {{3, 4}}},           {"pow_scalar", {{3, 4}}},      {"sum", {{3, 4}}},
      {"mean", {{3, 4}}},             {"mean_rows", {{4, 3}}},       {"conv2d", {{1, 2, 6, 6}}},
      {"conv2d_stride2", {{1, 2, 6, 6}}}, {"conv2d_valid", {{1, 2, 5, 5}}},
      {"conv_transpose2d", {{1, 2, 3, 3}}}, {"max_pool2d", {{1, 2, 4, 4}}},
      {"avg_pool2d", {{1, 2, 4, 4}}}, {"sparse_map", {{5, 3}}},
  };
}

}  // namespace mf
