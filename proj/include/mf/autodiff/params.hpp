#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mf/autodiff/rng.hpp"
#include "mf/autodiff/tensor.hpp"

namespace mf {

enum class Init {
  zeros,
  ones,
  trunc_normal,     // std 0.02, projections and embeddings
  kaiming_uniform,  // convolutions, bound sqrt(6 / fan_in)
  xavier_uniform,   // [in, out] matrices, bound sqrt(6 / (in + out))
};

/// Ordered registry of named trainable tensors.
template <typename T>
class ParamStore {
 public:
  /// fan_in is only read by Init::kaiming_uniform.
  Tensor<T> create(const std::string& name, Shape shape, Init init, Rng& rng, std::size_t fan_in = 1);

  const Tensor<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  const std::vector<std::pair<std::string, Tensor<T>>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor<T>>>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t total_elements() const;

  void zero_grad();
  /// Copies values from another store; names and shapes must match exactly.
  void copy_values_from(const ParamStore& other);

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace mf
