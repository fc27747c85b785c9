#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mf {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised for every shape or contract violation inside the engine.
class TensorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Process-wide switch: when disabled, ops record no backward closures.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  bool consumed = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return parents.empty(); }
  std::vector<T>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

/// Handle to a dense row-major array node. Copies share the node.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node().shape; }
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return node().shape.size(); }
  std::size_t numel() const { return node().data.size(); }

  std::span<T> data() { return node().data; }
  std::span<const T> data() const { return node().data; }
  std::span<T> grad() { return node().grad; }
  std::span<const T> grad() const { return node().grad; }
  bool has_grad() const { return node().grad.size() == node().data.size(); }

  bool requires_grad() const { return node().requires_grad; }
  Tensor& set_requires_grad(bool flag);
  const char* op_name() const { return node().op; }

  T item() const;
  T at(std::initializer_list<std::size_t> index) const;

  /// Reverse-mode pass from a scalar; frees the recorded graph afterwards.
  void backward();
  void zero_grad();
  /// Same values, no history.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  Node<T>& node();
  const Node<T>& node() const;
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

/// Creates an op result. The backward closure is kept only when grad mode is on
/// and at least one parent requires grad.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values, const char* op,
                      std::vector<Tensor<T>> parents,
                      std::function<void(Node<T>&)> backward_fn);

template <typename T>
void check_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b);

/// Converts between precisions without history.
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t) {
  std::vector<To> values(t.data().begin(), t.data().end());
  return Tensor<To>(t.shape(), std::move(values));
}

}  // namespace mf
