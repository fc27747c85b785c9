#include "mf/model/tokens.hpp"

#include <algorithm>

#include "mf/geometry/bev.hpp"

namespace mf::model {

template <typename T>
std::size_t TokenSequence<T>::count(Modality m) const {
  return static_cast<std::size_t>(std::count(tags.begin(), tags.end(), m));
}

template <typename T>
void TokenSequence<T>::check_runs() const {
  const std::size_t ni = count(Modality::image);
  if (ni == 0 || ni == tags.size()) throw TensorError("token sequence: missing image or bev run");
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if ((i < ni) != (tags[i] == Modality::image)) throw TensorError("token sequence: modality runs are interleaved");
  }
}

template <typename T>
Tokenizer<T> Tokenizer<T>::make(ParamStore<T>& ps, const std::string& name, std::size_t channels, std::size_t patch,
                                Rng& rng) {
  Tokenizer t;
  t.channels = channels;
  t.patch = patch;
  t.image_proj = nn::Linear<T>::make(ps, name + ".image_proj", channels, channels, rng);
  t.bev_proj = nn::Linear<T>::make(ps, name + ".bev_proj", channels, channels, rng);
  t.segment = ps.create(name + ".segment", {2, channels}, Init::trunc_normal, rng);
  return t;
}

template <typename T>
Tensor<T> Tokenizer<T>::position_terms(const std::vector<Modality>& tags,
                                       const std::vector<std::pair<std::size_t, std::size_t>>& coords) const {
  std::vector<std::size_t> ids;
  std::vector<T> pe;
  pe.reserve(tags.size() * channels);
  for (std::size_t i = 0; i < tags.size(); ++i) {
    ids.push_back(static_cast<std::size_t>(tags[i]));
    if (positional) {
      auto v = geometry::sinusoidal_2d(double(coords[i].first), double(coords[i].second), channels);
      pe.insert(pe.end(), v.begin(), v.end());
    } else {
      pe.insert(pe.end(), channels, T(0));
    }
  }
  return add(Tensor<T>({tags.size(), channels}, std::move(pe)), embedding(segment, ids));
}

template <typename T>
TokenSequence<T> Tokenizer<T>::operator()(const Tensor<T>& image_map, const Tensor<T>& lidar_map) const {
  for (const auto* m : {&image_map, &lidar_map}) {
    if (m->rank() != 4 || m->dim(1) != channels || m->dim(2) % patch != 0 || m->dim(3) % patch != 0) {
      throw TensorError("tokenize: map " + shape_str(m->shape()) + " is not divisible into " + std::to_string(patch) +
                        "x" + std::to_string(patch) + " patches of width " + std::to_string(channels));
    }
  }
  TokenSequence<T> seq;
  auto rows_of = [&](const Tensor<T>& m, Modality tag, const nn::Linear<T>& proj) {
    const std::size_t gh = m.dim(2) / patch, gw = m.dim(3) / patch;
    for (std::size_t r = 0; r < gh; ++r) {
      for (std::size_t c = 0; c < gw; ++c) {
        seq.tags.push_back(tag);
        seq.coords.emplace_back(r, c);
      }
    }
    auto pooled = patch == 1 ? m : avg_pool2d(m, patch, patch);
    return proj(nn::map_to_rows(pooled));
  };
  auto im = rows_of(image_map, Modality::image, image_proj);
  auto bev = rows_of(lidar_map, Modality::bev, bev_proj);
  seq.tokens = add(concat<T>({im, bev}, 0), position_terms(seq.tags, seq.coords));
  return seq;
}

template struct TokenSequence<float>;
template struct TokenSequence<double>;
template struct Tokenizer<float>;
template struct Tokenizer<double>;

}  // namespace mf::model
