#pragma once

#include <cstdint>
#include <vector>

#include "mf/model/tokens.hpp"

namespace mf::model {

struct MaskPlan {
  std::size_t total = 0;
  double ratio = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> kept;     // ascending
  std::vector<std::size_t> masked;   // ascending
  std::vector<std::size_t> restore;  // (kept ++ masked)[restore[i]] == i

  static MaskPlan identity(std::size_t n);
};

/// Uniform choice of floor(r*N) masked tokens without replacement.
MaskPlan plan_mask(std::size_t n, double ratio, std::uint64_t seed);

template <typename T>
TokenSequence<T> apply_mask(const TokenSequence<T>& seq, const MaskPlan& plan);

/// Scatters encoded visible tokens back to their positions; masked slots get
/// mask_embedding + position_terms (already evaluated for the masked tokens, [M, C]).
template <typename T>
Tensor<T> restore_tokens(const Tensor<T>& encoded_visible, const MaskPlan& plan, const Tensor<T>& mask_embedding,
                         const Tensor<T>& masked_position_terms);

/// Encoder visible-token cost estimate (multiply-adds) for one transformer layer.
double encoder_layer_flops(std::size_t tokens, std::size_t dim, std::size_t hidden);

}  // namespace mf::model
