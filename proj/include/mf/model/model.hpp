#pragma once

#include <cstdint>
#include <string>

#include "mf/model/backbone.hpp"
#include "mf/model/heads.hpp"
#include "mf/model/masking.hpp"
#include "mf/model/tokens.hpp"

namespace mf::model {

enum class ReconTarget { sensor, token };

ReconTarget parse_recon_target(const std::string& s);
std::string to_string(ReconTarget t);

template <typename T>
struct PretrainOutputs {
  ImageAux<T> image;
  BevAux<T> bev;
  Tensor<T> recon_image;  // [3, H, W] (sensor target)
  Tensor<T> recon_lidar;  // [33, R, R]
  Tensor<T> token_pred;   // [N, C] (token target)
  Tensor<T> token_target;
};

template <typename T>
struct DriveOutputs {
  ImageAux<T> image;
  BevAux<T> bev;
  Tensor<T> z;          // [1, z_dim]
  Tensor<T> waypoints;  // [T, 2]
  Tensor<T> speed;      // [1, 1]
};

/// Full network: branches with MBT, tokenizer, shared encoder, MAE decoder and all heads.
template <typename T>
class Model {
 public:
  Model(const ModelDims& dims, std::uint64_t seed);

  const ModelDims& dims() const { return dims_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  TokenSequence<T> tokenize(const Tensor<T>& image, const Tensor<T>& lidar) const;
  /// Encoder on the plan's visible tokens, then restoration to full length.
  Tensor<T> encode_restore(const TokenSequence<T>& seq, const MaskPlan& plan) const;

  PretrainOutputs<T> pretrain_forward(const Tensor<T>& image, const Tensor<T>& lidar, const MaskPlan& plan,
                                      ReconTarget target = ReconTarget::sensor) const;
  DriveOutputs<T> drive_forward(const Tensor<T>& image, const Tensor<T>& lidar, double goal_x, double goal_y,
                                const MaskPlan& plan) const;

  /// Splits a full-length sequence into its image and bev runs.
  std::pair<Tensor<T>, Tensor<T>> split_modalities(const Tensor<T>& tokens) const;

  Backbone<T> backbone;
  Tokenizer<T> tokenizer;
  nn::TransformerStack<T> encoder, decoder;
  Tensor<T> mask_embedding;
  ImageAuxHead<T> image_aux;
  BevAuxHead<T> bev_aux;
  ReconHead<T> recon_image, recon_lidar;
  nn::Linear<T> token_head;
  WaypointHead<T> waypoint;

 private:
  ModelDims dims_;
  ParamStore<T> params_;
};

}  // namespace mf::model
