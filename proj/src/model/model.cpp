#include "mf/model/model.hpp"

#include <stdexcept>

namespace mf::model {

ReconTarget parse_recon_target(const std::string& s) {
  if (s == "sensor") return ReconTarget::sensor;
  if (s == "token") return ReconTarget::token;
  throw std::invalid_argument("recon_target must be 'sensor' or 'token', got '" + s + "'");
}

std::string to_string(ReconTarget t) { return t == ReconTarget::sensor ? "sensor" : "token"; }

namespace {

std::size_t log2_of(std::size_t v) {
  std::size_t s = 0;
  while ((std::size_t(1) << s) < v) ++s;
  return s;
}

}  // namespace

template <typename T>
Model<T>::Model(const ModelDims& d, std::uint64_t seed) : dims_(d) {
  d.validate();
  Rng rng(seed);
  backbone = Backbone<T>::make(params_, d, rng);
  tokenizer = Tokenizer<T>::make(params_, "tokens", d.c, d.patch, rng);
  encoder = nn::TransformerStack<T>::make(params_, "encoder", d.encoder_layers, d.c, d.heads, d.ffn_hidden, rng);
  decoder = nn::TransformerStack<T>::make(params_, "decoder", d.decoder_layers, d.c, d.heads, d.ffn_hidden, rng);
  mask_embedding = params_.create("mask_embedding", {d.c}, Init::trunc_normal, rng);
  image_aux = ImageAuxHead<T>::make(params_, d, rng);
  bev_aux = BevAuxHead<T>::make(params_, d, rng);
  recon_image = ReconHead<T>::make(params_, "recon_image", d.c, d.image_grid_h(), d.image_grid_w(), d.patch,
                                   d.recon_channels, log2_of(d.image_h / d.image_final_h()), 3, rng);
  recon_lidar = ReconHead<T>::make(params_, "recon_lidar", d.c, d.bev_grid(), d.bev_grid(), d.patch,
                                   d.recon_channels, log2_of(d.lidar_res / d.lidar_final()), d.lidar_channels, rng);
  token_head = nn::Linear<T>::make(params_, "token_head", d.c, d.c, rng);
  waypoint = WaypointHead<T>::make(params_, d, rng);
}

template <typename T>
TokenSequence<T> Model<T>::tokenize(const Tensor<T>& image, const Tensor<T>& lidar) const {
  auto f = backbone(image, lidar);
  return tokenizer(f.image, f.lidar);
}

template <typename T>
Tensor<T> Model<T>::encode_restore(const TokenSequence<T>& seq, const MaskPlan& plan) const {
  auto visible = apply_mask(seq, plan);
  auto encoded = encoder(visible.tokens);
  Tensor<T> terms;
  if (!plan.masked.empty()) {
    std::vector<Modality> tags;
    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (auto i : plan.masked) {
      tags.push_back(seq.tags[i]);
      coords.push_back(seq.coords[i]);
    }
    terms = tokenizer.position_terms(tags, coords);
  }
  return restore_tokens(encoded, plan, mask_embedding, terms);
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> Model<T>::split_modalities(const Tensor<T>& tokens) const {
  if (tokens.rank() != 2 || tokens.dim(0) != dims_.tokens()) {
    throw TensorError("split tokens: expected " + std::to_string(dims_.tokens()) + " tokens, got " +
                      shape_str(tokens.shape()));
  }
  auto parts = split(tokens, 0, {dims_.image_tokens(), dims_.bev_tokens()});
  return {parts[0], parts[1]};
}

template <typename T>
PretrainOutputs<T> Model<T>::pretrain_forward(const Tensor<T>& image, const Tensor<T>& lidar, const MaskPlan& plan,
                                              ReconTarget target) const {
  auto seq = tokenize(image, lidar);
  seq.check_runs();
  auto dec = decoder(encode_restore(seq, plan));
  auto [im, bev] = split_modalities(dec);
  PretrainOutputs<T> out;
  out.image = image_aux(im);
  out.bev = bev_aux(bev);
  if (target == ReconTarget::sensor) {
    out.recon_image = recon_image(im);
    out.recon_lidar = recon_lidar(bev);
  } else {
    out.token_pred = token_head(dec);
    out.token_target = seq.tokens.detach();
  }
  return out;
}

template <typename T>
DriveOutputs<T> Model<T>::drive_forward(const Tensor<T>& image, const Tensor<T>& lidar, double goal_x, double goal_y,
                                        const MaskPlan& plan) const {
  auto seq = tokenize(image, lidar);
  seq.check_runs();
  auto fused = encode_restore(seq, plan);
  auto [im, bev] = split_modalities(fused);
  DriveOutputs<T> out;
  out.image = image_aux(im);
  out.bev = bev_aux(bev);
  out.z = waypoint.observation(im, bev);
  out.waypoints = waypoint.waypoints(out.z, goal_x, goal_y, dims_.waypoints);
  out.speed = waypoint.speed(out.z);
  return out;
}

template class Model<float>;
template class Model<double>;

}  // namespace mf::model
