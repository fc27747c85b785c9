#include "mf/autodiff/optim.hpp"

#include <cmath>
#include <string>

namespace mf {

template <typename T>
void adamw_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v, std::int64_t step,
                  const AdamWConfig& cfg) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
    throw TensorError("adamw_step: state size mismatch (param " + std::to_string(param.size()) + ", grad " +
                      std::to_string(grad.size()) + ", m " + std::to_string(m.size()) + ", v " +
                      std::to_string(v.size()) + ")");
  }
  if (step < 1) throw TensorError("adamw_step: step must be >= 1");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  const double decay = 1.0 - cfg.lr * cfg.weight_decay;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double mhat = mi / bc1;
    const double vhat = vi / bc2;
    param[i] = static_cast<T>(param[i] * decay - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
  }
}

template <typename T>
void AdamW<T>::ensure_state(const ParamStore<T>& params) {
  const auto& entries = params.entries();
  if (m_.size() == entries.size()) return;
  m_.clear();
  v_.clear();
  for (const auto& [name, t] : entries) {
    m_.emplace_back(t.numel(), T(0));
    v_.emplace_back(t.numel(), T(0));
  }
}

template <typename T>
void AdamW<T>::step(ParamStore<T>& params) {
  ensure_state(params);
  ++step_;
  auto& entries = params.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& t = entries[i].second;
    if (!t.has_grad()) continue;
    adamw_update<T>(t.data(), std::span<const T>(t.grad()), m_[i], v_[i], step_, cfg_);
  }
}

template void adamw_update<float>(std::span<float>, std::span<const float>, std::span<float>, std::span<float>,
                                  std::int64_t, const AdamWConfig&);
template void adamw_update<double>(std::span<double>, std::span<const double>, std::span<double>,
                                   std::span<double>, std::int64_t, const AdamWConfig&);
template class AdamW<float>;
template class AdamW<double>;

}  // namespace mf
