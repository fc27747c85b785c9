#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mf/model/dims.hpp"
#include "mf/nn/layers.hpp"

namespace mf::model {

enum class Modality : std::uint8_t { image = 0, bev = 1 };

template <typename T>
struct TokenSequence {
  Tensor<T> tokens;  // [N, C]
  std::vector<Modality> tags;
  std::vector<std::pair<std::size_t, std::size_t>> coords;  // (row, col) on the modality's token grid

  std::size_t size() const { return tags.size(); }
  std::size_t count(Modality m) const;
  /// Throws unless tags form one image run followed by one bev run.
  void check_runs() const;
};

/// Patch mean-pooling, a per-modality linear projection, then PE + SE.
template <typename T>
struct Tokenizer {
  std::size_t channels = 0, patch = 1;
  nn::Linear<T> image_proj, bev_proj;
  Tensor<T> segment;  // [2, C]
  bool positional = true;

  static Tokenizer make(ParamStore<T>& ps, const std::string& name, std::size_t channels, std::size_t patch, Rng& rng);

  /// image_map [1, C, H, W], lidar_map [1, C, H', W']
  TokenSequence<T> operator()(const Tensor<T>& image_map, const Tensor<T>& lidar_map) const;
  /// PE + SE rows for the given tags/coords, [n, C].
  Tensor<T> position_terms(const std::vector<Modality>& tags,
                           const std::vector<std::pair<std::size_t, std::size_t>>& coords) const;
};

}  // namespace mf::model
