#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mf/autodiff/tensor.hpp"

namespace mf {

using GradFn = std::function<Tensord(const std::vector<Tensord>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t elements = 0;
};

/// Compares reverse-mode gradients of sum(fn(inputs) * R), R a fixed random
/// projection, against central finite differences with step `step`. Returns the
/// max over input elements of |analytic - numeric| / max(|numeric|, 1e-8).
/// Throws TensorError on any non-finite intermediate.
GradCheckResult grad_check(const GradFn& fn, std::vector<Tensord> inputs, std::uint64_t seed, double step = 1e-4);

/// Catalog primitives by name with seeded random inputs of the given shapes.
/// Shapes are those of the primary input; auxiliary operands are derived.
double grad_check_op(const std::string& op, const std::vector<Shape>& shapes, std::uint64_t seed);

/// Names accepted by grad_check_op, each with a default shape set.
struct CatalogCase {
  std::string op;
  std::vector<Shape> shapes;
};
std::vector<CatalogCase> catalog_cases();

}  // namespace mf
