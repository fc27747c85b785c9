#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mf/autodiff/params.hpp"

namespace mf {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// One decoupled-weight-decay Adam update in place. `step` is 1-based.
template <typename T>
void adamw_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v, std::int64_t step,
                  const AdamWConfig& cfg);

template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  /// Applies one update to every parameter that has a gradient.
  void step(ParamStore<T>& params);

  AdamWConfig& config() { return cfg_; }
  const AdamWConfig& config() const { return cfg_; }
  std::int64_t steps_taken() const { return step_; }

  // Moment buffers are exposed for checkpointing.
  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  void set_steps_taken(std::int64_t s) { step_ = s; }
  void ensure_state(const ParamStore<T>& params);

 private:
  AdamWConfig cfg_;
  std::int64_t step_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

}  // namespace mf
