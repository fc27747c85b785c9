#include "mf/autodiff/params.hpp"

#include <cmath>

namespace mf {

template <typename T>
Tensor<T> ParamStore<T>::create(const std::string& name, Shape shape, Init init, Rng& rng, std::size_t fan_in) {
  if (index_.count(name)) throw TensorError("params: duplicate parameter '" + name + "'");
  const std::size_t n = shape_numel(shape);
  std::vector<T> values(n, T(0));
  // Each parameter draws from its own stream keyed by name.
  std::uint64_t tag = 1469598103934665603ULL;
  for (char ch : name) tag = (tag ^ static_cast<unsigned char>(ch)) * 1099511628211ULL;
  Rng local = rng.split(tag);
  switch (init) {
    case Init::zeros:
      break;
    case Init::ones:
      std::fill(values.begin(), values.end(), T(1));
      break;
    case Init::trunc_normal:
      for (auto& v : values) v = static_cast<T>(local.truncated_normal(0.02));
      break;
    case Init::kaiming_uniform: {
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in ? fan_in : 1));
      for (auto& v : values) v = static_cast<T>(local.uniform(-bound, bound));
      break;
    }
    case Init::xavier_uniform: {
      if (shape.size() != 2) throw TensorError("params: xavier init needs a matrix, got " + shape_str(shape));
      const double bound = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
      for (auto& v : values) v = static_cast<T>(local.uniform(-bound, bound));
      break;
    }
  }
  Tensor<T> t(std::move(shape), std::move(values), true);
  index_[name] = entries_.size();
  entries_.emplace_back(name, t);
  return t;
}

template <typename T>
const Tensor<T>& ParamStore<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw TensorError("params: unknown parameter '" + name + "'");
  return entries_[it->second].second;
}

template <typename T>
std::size_t ParamStore<T>::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

template <typename T>
void ParamStore<T>::copy_values_from(const ParamStore& other) {
  for (auto& [name, t] : entries_) {
    const auto& src = other.get(name);
    if (src.shape() != t.shape()) {
      throw TensorError("params: shape mismatch for '" + name + "': " + shape_str(t.shape()) + " vs " +
                        shape_str(src.shape()));
    }
    std::copy(src.data().begin(), src.data().end(), t.data().begin());
  }
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace mf
