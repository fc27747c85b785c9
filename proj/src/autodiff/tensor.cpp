#include "mf/autodiff/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace mf {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  if (shape.size() == 1) os << ',';
  os << ')';
  return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw TensorError("tensor: shape " + shape_str(shape) + " needs " +
                      std::to_string(shape_numel(shape)) + " values, got " +
                      std::to_string(values.size()));
  }
  node_ = std::make_shared<Node<T>>();
  node_->shape = std::move(shape);
  node_->data = std::move(values);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
Node<T>& Tensor<T>::node() {
  if (!node_) throw TensorError("tensor: use of undefined tensor");
  return *node_;
}

template <typename T>
const Node<T>& Tensor<T>::node() const {
  if (!node_) throw TensorError("tensor: use of undefined tensor");
  return *node_;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw TensorError("tensor: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[axis];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool flag) {
  node().requires_grad = flag;
  return *this;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw TensorError("item: tensor of shape " + shape_str(shape()) + " is not scalar");
  return node().data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw TensorError("at: index rank mismatch for " + shape_str(s));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= s[axis]) throw TensorError("at: index out of range for " + shape_str(s));
    flat = flat * s[axis] + i;
    ++axis;
  }
  return node().data[flat];
}

template <typename T>
void Tensor<T>::backward() {
  auto& root = node();
  if (root.data.size() != 1) {
    throw TensorError("backward: loss must be scalar, got shape " + shape_str(root.shape));
  }
  if (root.consumed) {
    throw TensorError("backward: graph already consumed; rebuild the forward pass before a second backward");
  }
  if (!root.requires_grad) {
    throw TensorError("backward: loss does not require grad");
  }

  // Iterative post-order DFS gives a topological order (parents before children).
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<T>* p = n->parents[next++].get();
      if (p && p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  root.ensure_grad();
  root.grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    n->ensure_grad();
    if (n->backward_fn) n->backward_fn(*n);
  }
  for (Node<T>* n : order) {
    if (!n->is_leaf()) {
      n->backward_fn = nullptr;
      n->parents.clear();
      n->consumed = true;
    }
  }
  root.consumed = true;
}

template <typename T>
void Tensor<T>::zero_grad() {
  auto& n = node();
  std::fill(n.grad.begin(), n.grad.end(), T(0));
  n.consumed = false;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(shape(), node().data, false);
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values, const char* op,
                      std::vector<Tensor<T>> parents,
                      std::function<void(Node<T>&)> backward_fn) {
  Tensor<T> out(std::move(shape), std::move(values));
  auto& n = out.node();
  n.op = op;
  if (!grad_enabled()) return out;
  const bool any = std::any_of(parents.begin(), parents.end(),
                               [](const Tensor<T>& p) { return p.defined() && p.requires_grad(); });
  if (!any) return out;
  n.requires_grad = true;
  n.parents.reserve(parents.size());
  for (auto& p : parents) n.parents.push_back(p.node_ptr());
  n.backward_fn = std::move(backward_fn);
  return out;
}

template <typename T>
void check_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw TensorError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  }
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_result(Shape, std::vector<float>, const char*, std::vector<Tensor<float>>,
                                   std::function<void(Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>, const char*, std::vector<Tensor<double>>,
                                    std::function<void(Node<double>&)>);
template void check_same_shape(const char*, const Tensor<float>&, const Tensor<float>&);
template void check_same_shape(const char*, const Tensor<double>&, const Tensor<double>&);

}  // namespace mf
