#include "mf/model/dims.hpp"

#include <stdexcept>
#include <string>

namespace mf::model {

ModelDims ModelDims::paper() {
  ModelDims d;
  d.image_h = 160;
  d.image_w = 704;
  d.lidar_res = 256;
  d.lidar_meters_per_pixel = 1.0 / 8.0;
  d.c1 = 72;
  d.c2 = 216;
  d.c = 512;
  d.ffn_hidden = 512;
  d.patch = 4;
  d.bev_aux_res = 64;
  d.z_dim = 256;
  d.z_token_channels = 16;
  d.recon_channels = 32;
  d.head_min_channels = 16;
  return d;
}

ModelDims ModelDims::tiny() {
  ModelDims d;
  d.image_h = 16;
  d.image_w = 32;
  d.lidar_res = 16;
  d.lidar_meters_per_pixel = 2.0;
  d.c1 = d.c2 = d.c = 8;
  d.heads = 2;
  d.ffn_hidden = 16;
  d.patch = 1;
  d.encoder_layers = d.decoder_layers = 1;
  d.depth_cells_near = 3;
  d.depth_cells_far = 2;
  d.bev_aux_res = 4;
  d.z_dim = 8;
  d.z_token_channels = 2;
  d.recon_channels = 2;
  d.head_min_channels = 2;
  d.waypoints = 2;
  return d;
}

namespace {

bool is_pow2(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("model dims: " + what);
}

}  // namespace

void ModelDims::validate() const {
  require(image_h % 8 == 0 && image_w % 8 == 0, "image size must be divisible by 8");
  require(lidar_res % 8 == 0, "lidar raster must be divisible by 8");
  require(image_final_h() % patch == 0 && image_final_w() % patch == 0, "image feature map not divisible by patch");
  require(lidar_final() % patch == 0, "lidar feature map not divisible by patch");
  require(c % heads == 0 && c1 % heads == 0 && c2 % heads == 0, "channels must divide into heads");
  require(c % 4 == 0 && c1 % 4 == 0 && c2 % 4 == 0, "channels must be multiples of 4 for positional encodings");
  require(is_pow2(image_h / (image_grid_h())), "image token grid must upsample by a power of two");
  require(image_h / image_grid_h() == image_w / image_grid_w(), "image token grid aspect mismatch");
  require(bev_aux_res % bev_grid() == 0 && is_pow2(bev_aux_res / bev_grid()), "bev aux resolution");
  require(is_pow2(image_h / image_final_h()) && is_pow2(lidar_res / lidar_final()), "recon upsampling");
  require(band_split > 0.0 && band_split < band_end && band_end < 1.0, "depth bands");
  require(waypoints >= 1, "waypoint count");
  require(lidar_extent_m() >= band_end * max_depth_m, "lidar extent smaller than the camera wedge");
}

}  // namespace mf::model
