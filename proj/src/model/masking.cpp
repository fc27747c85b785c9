#include "mf/model/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mf/autodiff/rng.hpp"

namespace mf::model {

MaskPlan MaskPlan::identity(std::size_t n) { return plan_mask(n, 0.0, 0); }

MaskPlan plan_mask(std::size_t n, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio < 1.0)) {
    throw std::invalid_argument("plan_mask: ratio must lie in [0, 1), got " + std::to_string(ratio));
  }
  MaskPlan p;
  p.total = n;
  p.ratio = ratio;
  p.seed = seed;
  const auto n_masked = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (n_masked > 0) {
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  }
  p.masked.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_masked));
  p.kept.assign(order.begin() + static_cast<std::ptrdiff_t>(n_masked), order.end());
  std::sort(p.masked.begin(), p.masked.end());
  std::sort(p.kept.begin(), p.kept.end());
  p.restore.assign(n, 0);
  for (std::size_t i = 0; i < p.kept.size(); ++i) p.restore[p.kept[i]] = i;
  for (std::size_t i = 0; i < p.masked.size(); ++i) p.restore[p.masked[i]] = p.kept.size() + i;
  return p;
}

template <typename T>
TokenSequence<T> apply_mask(const TokenSequence<T>& seq, const MaskPlan& plan) {
  if (plan.total != seq.size()) {
    throw std::invalid_argument("apply_mask: plan covers " + std::to_string(plan.total) + " tokens, sequence has " +
                                std::to_string(seq.size()));
  }
  TokenSequence<T> out;
  out.tokens = index_select(seq.tokens, plan.kept);
  for (auto i : plan.kept) {
    out.tags.push_back(seq.tags[i]);
    out.coords.push_back(seq.coords[i]);
  }
  return out;
}

template <typename T>
Tensor<T> restore_tokens(const Tensor<T>& encoded_visible, const MaskPlan& plan, const Tensor<T>& mask_embedding,
                         const Tensor<T>& masked_position_terms) {
  if (encoded_visible.rank() != 2 || encoded_visible.dim(0) != plan.kept.size()) {
    throw std::invalid_argument("restore: " + std::to_string(plan.kept.size()) + " kept tokens but encoder output " +
                                shape_str(encoded_visible.shape()));
  }
  if (plan.masked.empty()) return index_select(encoded_visible, plan.restore);
  if (masked_position_terms.dim(0) != plan.masked.size()) {
    throw std::invalid_argument("restore: position terms do not cover the masked tokens");
  }
  auto filler = add(broadcast_rows(mask_embedding, plan.masked.size()), masked_position_terms);
  return index_select(concat<T>({encoded_visible, filler}, 0), plan.restore);
}

double encoder_layer_flops(std::size_t tokens, std::size_t dim, std::size_t hidden) {
  const double n = static_cast<double>(tokens), c = static_cast<double>(dim), h = static_cast<double>(hidden);
  return 4.0 * n * c * c + 2.0 * n * n * c + 2.0 * n * c * h;
}

template TokenSequence<float> apply_mask(const TokenSequence<float>&, const MaskPlan&);
template TokenSequence<double> apply_mask(const TokenSequence<double>&, const MaskPlan&);
template Tensor<float> restore_tokens(const Tensor<float>&, const MaskPlan&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> restore_tokens(const Tensor<double>&, const MaskPlan&, const Tensor<double>&,
                                       const Tensor<double>&);

}  // namespace mf::model
