#include "mf/train/grad_suite.hpp"

#include <sstream>
#include <stdexcept>

#include "mf/autodiff/grad_check.hpp"
#include "mf/model/model.hpp"
#include "mf/train/losses.hpp"

namespace mf::train {

using model::ModelDims;

namespace {

Tensord random(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(s));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensord(s, std::move(v));
}

std::vector<double> random_values(std::size_t n, Rng& rng, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

Tensord flat_concat(const std::vector<Tensord>& parts) {
  std::vector<Tensord> flat;
  for (const auto& p : parts) flat.push_back(reshape(p, {p.numel()}));
  return concat<double>(flat, 0);
}

const model::Model<double>& tiny_model() {
  static const model::Model<double> m(ModelDims::tiny(), 17);
  return m;
}

}  // namespace

std::vector<std::string> composite_names() {
  return {"mbt_attention", "encoder_layer", "tokenizer",     "gru_step",     "image_aux_head",
          "bev_aux_head",  "recon_head",    "waypoint_head", "waypoint_loss", "recon_loss",
          "focal_loss",    "cross_entropy", "l1_loss",       "combine_total"};
}

double grad_check_composite(const std::string& name, std::uint64_t seed) {
  const auto& m = tiny_model();
  const auto& d = m.dims();
  Rng rng = Rng(seed).split(0x6a7d);
  GradFn fn;
  std::vector<Tensord> inputs;

  if (name == "mbt_attention") {
    auto stage = m.backbone.mbt1;
    inputs = {random({1, d.c1, d.image_stage1_h(), d.image_stage1_w()}, rng),
              random({1, d.c1, d.lidar_stage1(), d.lidar_stage1()}, rng), random({d.c1, d.c1}, rng)};
    // O(1) weights on the translation path; at init scale its gradients sit at the
    // finite-difference noise floor.
    for (auto* lin : {&stage.query_attn.k, &stage.query_attn.v, &stage.query_attn.o, &stage.m1, &stage.m2}) {
      lin->weight = random({d.c1, d.c1}, rng);
    }
    fn = [stage](const std::vector<Tensord>& in) mutable {
      stage.query_attn.q.weight = in[2];
      auto r = stage(in[0], in[1]);
      return flat_concat({r.image, r.lidar, r.f_mid});
    };
  } else if (name == "encoder_layer") {
    auto layer = m.encoder.layers.at(0);
    inputs = {random({5, d.c}, rng), random({d.c, d.ffn_hidden}, rng, -0.3, 0.3)};
    fn = [layer](const std::vector<Tensord>& in) mutable {
      layer.ff1.weight = in[1];
      return layer(in[0]);
    };
  } else if (name == "tokenizer") {
    auto tok = m.tokenizer;
    inputs = {random({1, d.c, d.image_final_h(), d.image_final_w()}, rng),
              random({1, d.c, d.lidar_final(), d.lidar_final()}, rng), random({2, d.c}, rng)};
    fn = [tok](const std::vector<Tensord>& in) mutable {
      tok.segment = in[2];
      return tok(in[0], in[1]).tokens;
    };
  } else if (name == "gru_step") {
    auto gru = m.waypoint.gru;
    inputs = {random({1, 4}, rng), random({1, d.z_dim}, rng), random({d.z_dim, 3 * d.z_dim}, rng, -0.3, 0.3)};
    fn = [gru](const std::vector<Tensord>& in) mutable {
      gru.hidden.weight = in[2];
      return gru(in[0], in[1]);
    };
  } else if (name == "image_aux_head") {
    const auto& head = m.image_aux;
    inputs = {random({d.image_tokens(), d.c}, rng)};
    fn = [&head](const std::vector<Tensord>& in) {
      auto o = head(in[0]);
      return flat_concat({o.depth, o.semantic});
    };
  } else if (name == "bev_aux_head") {
    const auto& head = m.bev_aux;
    inputs = {random({d.bev_tokens(), d.c}, rng)};
    fn = [&head](const std::vector<Tensord>& in) {
      auto o = head(in[0]);
      return flat_concat({o.segmentation, o.position, o.orientation, o.regression});
    };
  } else if (name == "recon_head") {
    const auto& a = m.recon_image;
    const auto& b = m.recon_lidar;
    inputs = {random({d.image_tokens(), d.c}, rng), random({d.bev_tokens(), d.c}, rng)};
    fn = [&a, &b](const std::vector<Tensord>& in) { return flat_concat({a(in[0]), b(in[1])}); };
  } else if (name == "waypoint_head") {
    const auto& head = m.waypoint;
    inputs = {random({d.image_tokens(), d.c}, rng), random({d.bev_tokens(), d.c}, rng)};
    const double gx = rng.uniform(5, 20), gy = rng.uniform(-5, 5);
    fn = [&head, gx, gy, steps = d.waypoints](const std::vector<Tensord>& in) {
      auto z = head.observation(in[0], in[1]);
      return flat_concat({head.waypoints(z, gx, gy, steps), head.speed(z)});
    };
  } else if (name == "waypoint_loss") {
    auto gt = random_values(8, rng, -3, 3);
    inputs = {random({4, 2}, rng, -3, 3)};
    fn = [gt](const std::vector<Tensord>& in) { return waypoint_loss(in[0], gt); };
  } else if (name == "recon_loss") {
    auto a = random_values(24, rng, 0, 1), b = random_values(18, rng, 0, 1);
    inputs = {random({3, 2, 4}, rng), random({2, 3, 3}, rng)};
    fn = [a, b](const std::vector<Tensord>& in) { return recon_loss(in[0], in[1], a, b, 1.0, 0.5); };
  } else if (name == "focal_loss") {
    std::vector<double> target = random_values(36, rng, 0, 0.9);
    target[7] = target[20] = 1.0;
    inputs = {random({1, 6, 6}, rng, 0.05, 0.95)};
    fn = [target](const std::vector<Tensord>& in) { return focal_loss(in[0], target).value; };
  } else if (name == "cross_entropy") {
    std::vector<int> labels(12);
    for (auto& l : labels) l = static_cast<int>(rng.below(5)) - 1;
    labels[0] = 2;
    inputs = {random({4, 3, 4}, rng, -2, 2)};
    fn = [labels](const std::vector<Tensord>& in) { return cross_entropy(in[0], labels).value; };
  } else if (name == "l1_loss") {
    auto gt = random_values(30, rng, -1, 1);
    std::vector<std::uint8_t> mask(10);
    for (auto& v : mask) v = rng.uniform() < 0.5;
    mask[3] = 1;
    inputs = {random({3, 2, 5}, rng)};
    // Keep every residual away from the |x| kink.
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (std::abs(inputs[0].data()[i] - gt[i]) < 0.05) gt[i] += 0.2;
    }
    fn = [gt, mask](const std::vector<Tensord>& in) { return l1_loss(in[0], gt, mask).value; };
  } else if (name == "combine_total") {
    inputs = {random({1}, rng), random({1}, rng), random({1}, rng)};
    fn = [](const std::vector<Tensord>& in) {
      LossWeights w;
      return combine_total<double>({{"wp", sum(in[0])}, {"detection", sum(in[1])}, {"depth", sum(in[2])}}, w);
    };
  } else {
    throw std::invalid_argument("grad check: unknown composite '" + name + "'");
  }
  return grad_check(fn, inputs, seed).max_rel_error;
}

std::vector<GradRow> run_grad_suite(const std::vector<std::uint64_t>& seeds) {
  std::vector<GradRow> rows;
  for (const auto& c : catalog_cases()) {
    for (auto s : seeds) {
      const double e = grad_check_op(c.op, c.shapes, s);
      rows.push_back({c.op, s, e, e < kGradTolerance});
    }
  }
  for (const auto& name : composite_names()) {
    for (auto s : seeds) {
      const double e = grad_check_composite(name, s);
      rows.push_back({name, s, e, e < kGradTolerance});
    }
  }
  return rows;
}

std::string grad_rows_to_csv(const std::vector<GradRow>& rows) {
  std::ostringstream os;
  os << "name,seed,max_rel_error,passed\n";
  for (const auto& r : rows) os << r.name << ',' << r.seed << ',' << r.max_rel_error << ',' << (r.passed ? 1 : 0) << '\n';
  return os.str();
}

}  // namespace mf::train
