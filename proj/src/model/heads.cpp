#include "mf/model/heads.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <tuple>

namespace mf::model {

namespace {

std::size_t log2_exact(std::size_t v) {
  std::size_t s = 0;
  while ((std::size_t(1) << s) < v) ++s;
  if ((std::size_t(1) << s) != v) throw std::invalid_argument("upsampling factor is not a power of two");
  return s;
}

template <typename T>
void check_tokens(const char* head, const Tensor<T>& tokens, std::size_t expected) {
  if (tokens.rank() != 2 || tokens.dim(0) != expected) {
    throw TensorError(std::string(head) + ": expected " + std::to_string(expected) + " tokens, got " +
                      shape_str(tokens.shape()));
  }
}

}  // namespace

template <typename T>
UpsampleDecoder<T> UpsampleDecoder<T>::make(ParamStore<T>& ps, const std::string& name, std::size_t cin,
                                            std::size_t steps, std::size_t min_channels, std::size_t cout, Rng& rng,
                                            bool halve) {
  UpsampleDecoder d;
  std::size_t ch = cin;
  for (std::size_t i = 0; i < steps; ++i) {
    const std::size_t next = halve ? std::max(min_channels, ch / 2) : ch;
    d.ups.push_back(nn::ConvUp<T>::make(ps, name + ".up" + std::to_string(i), ch, next, rng));
    ch = next;
  }
  d.out = nn::Conv<T>::make(ps, name + ".out", ch, cout, 1, 1, 0, rng);
  return d;
}

template <typename T>
Tensor<T> UpsampleDecoder<T>::operator()(const Tensor<T>& x) const {
  Tensor<T> h = x;
  for (const auto& up : ups) h = gelu(up(h));
  return out(h);
}

template <typename T>
ImageAuxHead<T> ImageAuxHead<T>::make(ParamStore<T>& ps, const ModelDims& d, Rng& rng) {
  ImageAuxHead h;
  h.grid_h = d.image_grid_h();
  h.grid_w = d.image_grid_w();
  h.classes = d.semantic_classes;
  const std::size_t steps = log2_exact(d.image_h / h.grid_h);
  h.decoder = UpsampleDecoder<T>::make(ps, "image_aux", d.c, steps, d.head_min_channels, 1 + h.classes, rng);
  return h;
}

template <typename T>
ImageAux<T> ImageAuxHead<T>::operator()(const Tensor<T>& tokens) const {
  check_tokens("image_aux_heads", tokens, grid_h * grid_w);
  auto y = decoder(nn::rows_to_map(tokens, grid_h, grid_w));
  const std::size_t h = y.dim(2), w = y.dim(3);
  auto parts = split(y, 1, {1, classes});
  return {reshape(sigmoid(parts[0]), {h, w}), reshape(parts[1], {classes, h, w})};
}

template <typename T>
BevAuxHead<T> BevAuxHead<T>::make(ParamStore<T>& ps, const ModelDims& d, Rng& rng) {
  BevAuxHead h;
  h.grid = d.bev_grid();
  h.classes = d.bev_classes;
  h.yaw_bins = d.yaw_bins;
  const std::size_t steps = log2_exact(d.bev_aux_res / h.grid);
  h.decoder = UpsampleDecoder<T>::make(ps, "bev_aux", d.c, steps, d.head_min_channels,
                                       h.classes + 1 + h.yaw_bins + 5, rng);
  return h;
}

template <typename T>
BevAux<T> BevAuxHead<T>::operator()(const Tensor<T>& tokens) const {
  check_tokens("bev_aux_heads", tokens, grid * grid);
  auto y = decoder(nn::rows_to_map(tokens, grid, grid));
  const std::size_t a = y.dim(2);
  auto parts = split(y, 1, {classes, 1, yaw_bins, 5});
  return {reshape(parts[0], {classes, a, a}), reshape(sigmoid(parts[1]), {1, a, a}), reshape(parts[2], {yaw_bins, a, a}),
          reshape(parts[3], {5, a, a})};
}

template <typename T>
ReconHead<T> ReconHead<T>::make(ParamStore<T>& ps, const std::string& name, std::size_t dim, std::size_t grid_h,
                                std::size_t grid_w, std::size_t block, std::size_t channels, std::size_t steps,
                                std::size_t out_channels, Rng& rng) {
  ReconHead h;
  h.grid_h = grid_h;
  h.grid_w = grid_w;
  h.block = block;
  h.channels = channels;
  h.to_block = nn::Linear<T>::make(ps, name + ".block", dim, channels * block * block, rng);
  h.decoder = UpsampleDecoder<T>::make(ps, name, channels, steps, channels, out_channels, rng, false);
  // Sensors lie in [0, 1]; start predictions at the midpoint.
  for (auto& b : h.decoder.out.bias.data()) b = T(0.5);
  return h;
}

template <typename T>
Tensor<T> ReconHead<T>::operator()(const Tensor<T>& tokens) const {
  check_tokens("reconstruction head", tokens, grid_h * grid_w);
  auto blocks = reshape(to_block(tokens), {grid_h, grid_w, channels, block, block});
  auto map = reshape(permute(blocks, {2, 0, 3, 1, 4}), {1, channels, grid_h * block, grid_w * block});
  auto y = decoder(map);
  return reshape(y, {y.dim(1), y.dim(2), y.dim(3)});
}

template <typename T>
GruCell<T> GruCell<T>::make(ParamStore<T>& ps, const std::string& name, std::size_t in, std::size_t hidden, Rng& rng) {
  GruCell g;
  g.size = hidden;
  g.input = nn::Linear<T>::make(ps, name + ".x", in, 3 * hidden, rng);
  g.hidden = nn::Linear<T>::make(ps, name + ".h", hidden, 3 * hidden, rng);
  return g;
}

template <typename T>
Tensor<T> GruCell<T>::operator()(const Tensor<T>& x, const Tensor<T>& h) const {
  auto gx = split(input(x), 1, {size, size, size});
  auto gh = split(hidden(h), 1, {size, size, size});
  auto r = sigmoid(add(gx[0], gh[0]));
  auto u = sigmoid(add(gx[1], gh[1]));
  auto n = tanh(add(gx[2], mul(r, gh[2])));
  return add(n, mul(u, sub(h, n)));
}

template <typename T>
WaypointHead<T> WaypointHead<T>::make(ParamStore<T>& ps, const ModelDims& d, Rng& rng) {
  WaypointHead w;
  w.steps = d.waypoints;
  w.reduce = nn::Linear<T>::make(ps, "waypoint.reduce", d.c, d.z_token_channels, rng);
  w.z1 = nn::Linear<T>::make(ps, "waypoint.z1", d.tokens() * d.z_token_channels, d.z_dim, rng);
  w.z2 = nn::Linear<T>::make(ps, "waypoint.z2", d.z_dim, d.z_dim, rng);
  w.init = nn::Linear<T>::make(ps, "waypoint.init", d.z_dim, d.z_dim, rng);
  w.gru = GruCell<T>::make(ps, "waypoint.gru", 4, d.z_dim, rng);
  w.delta = nn::Linear<T>::make(ps, "waypoint.delta", d.z_dim, 2, rng);
  w.velocity = nn::Linear<T>::make(ps, "waypoint.velocity", d.z_dim, 1, rng);
  return w;
}

template <typename T>
Tensor<T> WaypointHead<T>::observation(const Tensor<T>& image_tokens, const Tensor<T>& bev_tokens) const {
  // Each token is narrowed, then the whole sequence is flattened so token position survives.
  auto joint = gelu(reduce(concat<T>({image_tokens, bev_tokens}, 0)));
  return z2(gelu(z1(reshape(joint, {1, joint.numel()}))));
}

template <typename T>
Tensor<T> WaypointHead<T>::waypoints(const Tensor<T>& z, double goal_x, double goal_y, std::size_t n) const {
  if (n < 1) throw std::invalid_argument("waypoint_gru: need at least one step");
  // Coordinates enter the GRU in units of 10 m so the gates start unsaturated.
  const T unit = T(0.1);
  const Tensor<T> goal({1, 2}, {static_cast<T>(goal_x) * unit, static_cast<T>(goal_y) * unit});
  auto h = init(z);
  Tensor<T> w = Tensor<T>::zeros({1, 2});
  std::vector<Tensor<T>> out;
  for (std::size_t t = 0; t < n; ++t) {
    h = gru(concat<T>({scale(w, unit), goal}, 1), h);
    w = add(w, delta(h));
    out.push_back(w);
  }
  return concat<T>(out, 0);
}

double gaussian_sigma_px(const geometry::Box& box, const geometry::BevFrame& frame) {
  const double extent = std::min(box.length, box.width) * frame.pixels_per_meter();
  return std::max(1.0, extent / 6.0);
}

int yaw_bin(double yaw_rad, std::size_t bins) {
  const double two_pi = 2.0 * std::numbers::pi;
  double y = std::fmod(yaw_rad, two_pi);
  if (y < 0) y += two_pi;
  const int b = static_cast<int>(std::floor(y / (two_pi / static_cast<double>(bins))));
  return std::min(b, static_cast<int>(bins) - 1);
}

double yaw_bin_center(int bin, std::size_t bins) {
  return (static_cast<double>(bin) + 0.5) * 2.0 * std::numbers::pi / static_cast<double>(bins);
}

DetectionTargets encode_detection_targets(const std::vector<geometry::Box>& boxes, const geometry::BevFrame& frame) {
  const std::size_t a = frame.resolution;
  DetectionTargets t;
  t.res = a;
  t.position.assign(a * a, 0.0);
  t.orientation.assign(a * a, -1);
  t.regression.assign(5 * a * a, 0.0);
  t.center.assign(a * a, 0);
  // Competing boxes at one center pixel: the one whose true center lies closest wins,
  // ties broken by value, so the result does not depend on list order.
  std::vector<double> owner_dist(a * a, 1e300);
  std::vector<const geometry::Box*> owner(a * a, nullptr);
  auto better = [](double d, const geometry::Box& b, double od, const geometry::Box* o) {
    if (!o || d < od) return true;
    if (d > od) return false;
    return std::tie(b.x, b.y, b.length, b.width, b.yaw) < std::tie(o->x, o->y, o->length, o->width, o->yaw);
  };
  for (const auto& box : boxes) {
    const auto p = geometry::meters_to_pixels(box.x, box.y, frame);
    if (!p.in_frame) {
      ++t.skipped;
      continue;
    }
    const long r0 = std::lround(p.row), c0 = std::lround(p.col);
    const double sigma = gaussian_sigma_px(box, frame);
    const long reach = static_cast<long>(std::ceil(3.0 * sigma));
    for (long r = std::max(0L, r0 - reach); r <= std::min<long>(long(a) - 1, r0 + reach); ++r) {
      for (long c = std::max(0L, c0 - reach); c <= std::min<long>(long(a) - 1, c0 + reach); ++c) {
        const double d2 = double((r - r0) * (r - r0) + (c - c0) * (c - c0));
        auto& v = t.position[std::size_t(r) * a + std::size_t(c)];
        v = std::max(v, std::exp(-d2 / (2.0 * sigma * sigma)));
      }
    }
    const std::size_t idx = std::size_t(r0) * a + std::size_t(c0);
    const double dist = std::hypot(p.row - double(r0), p.col - double(c0));
    if (!better(dist, box, owner_dist[idx], owner[idx])) continue;
    owner[idx] = &box;
    owner_dist[idx] = dist;
    const int bin = yaw_bin(box.yaw);
    t.center[idx] = 1;
    t.orientation[idx] = bin;
    double yaw = std::fmod(box.yaw, 2.0 * std::numbers::pi);
    if (yaw < 0) yaw += 2.0 * std::numbers::pi;
    const double values[5] = {box.length, box.width, p.row - double(r0), p.col - double(c0),
                              yaw - yaw_bin_center(bin)};
    for (std::size_t k = 0; k < 5; ++k) t.regression[k * a * a + idx] = values[k];
  }
  return t;
}

#define MF_INSTANTIATE_HEADS(T)    \
  template struct UpsampleDecoder<T>; \
  template struct ImageAuxHead<T>; \
  template struct BevAuxHead<T>;   \
  template struct ReconHead<T>;    \
  template struct GruCell<T>;      \
  template struct WaypointHead<T>;

MF_INSTANTIATE_HEADS(float)
MF_INSTANTIATE_HEADS(double)

}  // namespace mf::model
