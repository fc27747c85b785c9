// One PASS/FAIL line per acceptance criterion. Exit status is the number of failures.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>

#include "mf/eval/evaluate.hpp"
#include "mf/geometry/bev.hpp"
#include "mf/train/grad_suite.hpp"
#include "mf/train/trainer.hpp"

using namespace mf;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& fn) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("%s  criterion %2d  %-26s %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(),
              seconds_since(t0));
  std::fflush(stdout);
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<scenes::SceneSample> make_samples(const scenes::SensorSetup& setup, std::uint64_t seed, std::size_t n) {
  std::vector<scenes::SceneSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(scenes::generate_scene(scenes::random_spec(seed + i, scenes::TopologyMix{}, setup), setup));
  }
  return out;
}

// 1 -----------------------------------------------------------------------
Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  const auto rows = train::run_grad_suite({1, 2, 3, 4, 5});
  const double secs = seconds_since(t0);
  double worst = 0;
  std::string worst_name;
  std::size_t bad = 0;
  for (const auto& r : rows) {
    if (r.max_rel_error > worst) worst = r.max_rel_error, worst_name = r.name;
    bad += !r.passed;
  }
  return {bad == 0 && secs < 60.0,
          fmt("%zu checks, %zu over 1e-4, worst %.2e (%s), %.1f s", rows.size(), bad, worst, worst_name.c_str(), secs)};
}

// 2 -----------------------------------------------------------------------
Outcome shape_exactness() {
  const auto d = model::ModelDims::paper();
  model::Model<float> m(d, 1);
  Tensorf image = Tensorf::zeros({3, d.image_h, d.image_w});
  Tensorf lidar = Tensorf::zeros({d.lidar_channels, d.lidar_res, d.lidar_res});
  NoGradGuard g;
  const auto feats = m.backbone(image, lidar);
  const auto seq = m.tokenizer(feats.image, feats.lidar);
  const auto out = m.drive_forward(image, lidar, 10.0, 0.0, model::MaskPlan::identity(d.tokens()));
  std::vector<std::string> bad;
  auto check = [&](const char* what, const Shape& got, const Shape& want) {
    if (got != want) bad.push_back(what);
  };
  check("image map", feats.image.shape(), {1, 512, 20, 88});
  check("bev map", feats.lidar.shape(), {1, 512, 32, 32});
  check("mbt1 grid", {m.backbone.mbt1.grid.num_depth, m.backbone.mbt1.grid.num_azimuth}, {25, 176});
  check("mbt2 grid", {m.backbone.mbt2.grid.num_depth, m.backbone.mbt2.grid.num_azimuth}, {13, 176});
  check("semantic", out.image.semantic.shape(), {7, 160, 704});
  check("depth", out.image.depth.shape(), {160, 704});
  check("bev seg", out.bev.segmentation.shape(), {3, 64, 64});
  check("position", out.bev.position.shape(), {1, 64, 64});
  check("orientation", out.bev.orientation.shape(), {12, 64, 64});
  check("regression", out.bev.regression.shape(), {5, 64, 64});
  check("z", out.z.shape(), {1, 256});
  const bool tokens_ok = seq.size() == 174 && d.image_tokens() == 110 && d.bev_tokens() == 64;
  if (!tokens_ok) bad.push_back("token count");
  std::string list;
  for (const auto& b : bad) list += " " + b;
  return {bad.empty(), bad.empty() ? std::string("174 tokens (110 + 64), all 11 shapes equal") : "mismatch:" + list};
}

// 3 -----------------------------------------------------------------------
Outcome mask_machinery() {
  std::size_t plans = 0;
  for (std::size_t n : {1u, 2u, 3u, 7u, 12u, 48u, 71u, 100u, 174u, 255u, 333u, 512u}) {
    for (double r : {0.0, 0.25, 0.5, 0.75}) {
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto p = model::plan_mask(n, r, seed);
        ++plans;
        if (p.masked.size() != static_cast<std::size_t>(std::floor(r * double(n)))) {
          return {false, fmt("N=%zu r=%.2f seed=%llu: %zu masked", n, r, (unsigned long long)seed, p.masked.size())};
        }
        std::vector<std::size_t> order = p.kept;
        order.insert(order.end(), p.masked.begin(), p.masked.end());
        if (p.restore.size() != n) return {false, "restore length"};
        for (std::size_t i = 0; i < n; ++i) {
          if (order[p.restore[i]] != i) return {false, fmt("restore round trip fails at N=%zu", n)};
        }
        if (r == 0.0) {
          const auto id = model::MaskPlan::identity(n);
          if (p.kept != id.kept || p.restore != id.restore) return {false, "r=0 is not the identity"};
        }
      }
    }
  }
  const auto p = model::plan_mask(174, 0.75, 7);
  return {p.kept.size() == 44, fmt("%zu plans checked; N=174 r=.75 keeps %zu", plans, p.kept.size())};
}

// 4 -----------------------------------------------------------------------
std::vector<double> oracle_resample(const Tensord& values, const geometry::PolarRayGrid& g,
                                    const geometry::BevFrame& frame) {
  const std::size_t c = values.dim(2), n = frame.resolution;
  std::vector<double> out(c * n * n, 0.0);
  const double f = g.camera.focal_px();
  std::vector<double> ucol(g.num_azimuth);
  for (std::size_t k = 0; k < g.num_azimuth; ++k) ucol[k] = g.camera.cx() + f * std::tan(g.azimuth_rad[k]);
  for (std::size_t row = 0; row < n; ++row) {
    for (std::size_t col = 0; col < n; ++col) {
      const double x = (double(n - 1) - double(row)) * frame.meters_per_pixel;
      const double y = (double(col) - double(n / 2)) * frame.meters_per_pixel;
      if (x <= 0) continue;
      const double u = g.camera.cx() + f * y / x, rho = std::hypot(x, y);
      bool done = false;
      for (std::size_t k = 0; k + 1 < g.num_azimuth && !done; ++k) {
        if (!(u >= ucol[k] - 1e-9 && u <= ucol[k + 1] + 1e-9)) continue;
        for (std::size_t j = 0; j + 1 < g.num_depth && !done; ++j) {
          if (!(rho >= g.radius_m[j] - 1e-9 && rho <= g.radius_m[j + 1] + 1e-9)) continue;
          const double fs = (u - ucol[k]) / (ucol[k + 1] - ucol[k]);
          const double ft = (rho - g.radius_m[j]) / (g.radius_m[j + 1] - g.radius_m[j]);
          for (std::size_t ch = 0; ch < c; ++ch) {
            auto v = [&](std::size_t kk, std::size_t jj) { return values.at({kk, jj, ch}); };
            out[(ch * n + row) * n + col] = (1 - fs) * (1 - ft) * v(k, j) + (1 - fs) * ft * v(k, j + 1) +
                                            fs * (1 - ft) * v(k + 1, j) + fs * ft * v(k + 1, j + 1);
          }
          done = true;
        }
      }
    }
  }
  return out;
}

Outcome geometry_oracle() {
  const auto cam = geometry::CameraModel::make(120.0, 64, 16);
  const auto frame = geometry::BevFrame::make(64, 0.5);
  double worst = 0;
  for (geometry::DepthBand band : {geometry::DepthBand{0.0, 0.625}, geometry::DepthBand{0.625, 0.95}}) {
    const auto g = geometry::build_polar_ray_grid(cam, 8, 8, band, 32.0);
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      Rng rng(seed);
      auto vals = Tensord::zeros({8, 8, 2});
      for (auto& v : vals.data()) v = rng.uniform(-1.0, 1.0);
      const auto out = geometry::polar_to_bev_resample(vals, g, frame);
      const auto ref = oracle_resample(vals, g, frame);
      for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(double(out.data()[i]) - ref[i]));
    }
  }
  const auto g = geometry::build_polar_ray_grid(cam, 8, 8, {0.0, 0.625}, 32.0);
  const auto ones = geometry::polar_to_bev_resample(Tensord::full({8, 8, 1}, 1.0), g, frame);
  Rng rng(99);
  std::size_t sampled = 0, violations = 0;
  while (sampled < 1000) {
    const std::size_t row = rng.below(64), col = rng.below(64);
    const auto [x, y] = frame.pixel_to_meters(row, col);
    if (x > 0 && std::abs(std::atan2(y, x)) <= std::numbers::pi / 3) continue;
    ++sampled;
    violations += ones.data()[row * 64 + col] != 0.0;
  }
  return {worst < 1e-5 && violations == 0,
          fmt("max |resample - oracle| %.2e; %zu/1000 outside-wedge pixels nonzero", worst, violations)};
}

// 5 -----------------------------------------------------------------------
train::RunConfig smoke_config() {
  train::RunConfig c;
  c.load_text("model.dims = desk\noptim.lr = 1e-3\noptim.lr_drop_epoch = 1000000\ntrain.batch_size = 16\n"
              "train.augment = false\ntrain.max_steps = 200\ntrain.epochs = 1000\nseed = 0\n");
  return c;
}

double mean_wp_loss(const model::Model<float>& m, const std::vector<scenes::SceneSample>& data) {
  NoGradGuard g;
  double sum = 0;
  for (const auto& s : data) {
    auto out = m.drive_forward(train::camera_tensor(s), train::lidar_tensor(s), s.target_x, s.target_y,
                               model::MaskPlan::identity(m.dims().tokens()));
    sum += train::waypoint_loss(out.waypoints, s.waypoints).item();
  }
  return sum / double(data.size());
}

std::unique_ptr<train::Trainer> trained;  // reused by criterion 9

Outcome convergence_smoke() {
  const auto t0 = Clock::now();
  const auto cfg = smoke_config();
  const auto data = make_samples(train::sensors_from(model::ModelDims::desk()), 100, 16);
  trained = std::make_unique<train::Trainer>(train::Phase::train, cfg, data);
  const double before = mean_wp_loss(trained->model(), data);
  double step1 = 0;
  while (trained->steps_done() < 200) {
    const auto r = trained->step();
    if (r.step == 1) step1 = r.parts.at("wp");
  }
  const double after = mean_wp_loss(trained->model(), data);
  const double secs = seconds_since(t0);
  return {after < 0.1 * before && secs < 600.0,
          fmt("mean wp loss over the 16 samples %.4g -> %.4g (%.1f%%; step-1 sample %.4g), %.0f s", before, after,
              100.0 * after / before, step1, secs)};
}

// 6 -----------------------------------------------------------------------
Outcome mae_ordering() {
  // One pretrain per (ratio, seed); each run is scored at its own ratio on unseen scenes.
  const auto setup = train::sensors_from(model::ModelDims::desk());
  const auto held = make_samples(setup, 900, 8);
  std::vector<double> means;
  for (const char* r : {"0", "0.25", "0.75"}) {
    double sum = 0;
    for (int seed = 1; seed <= 3; ++seed) {
      train::RunConfig cfg;
      cfg.load_text(fmt("model.dims = desk\noptim.lr = 1e-3\ntrain.max_steps = 500\ntrain.epochs = 1000\n"
                        "train.pretrain_aux = false\nmask_ratio = %s\nseed = %d\n",
                        r, seed));
      train::Trainer t(train::Phase::pretrain, cfg, make_samples(setup, 200 + 100 * seed, 16));
      while (t.steps_done() < t.total_steps()) t.step();
      const auto n = t.model().dims().tokens();
      for (std::size_t i = 0; i < held.size(); ++i) {
        sum += train::reconstruction_error(t.model(), held[i], model::plan_mask(n, std::stod(r), seed * 1000 + i));
      }
    }
    means.push_back(sum / double(3 * held.size()));
  }
  return {means[0] < means[1] && means[1] < means[2],
          fmt("held-out recon error, pretrained and scored per ratio: r=0 %.5g, r=.25 %.5g, r=.75 %.5g", means[0],
              means[1], means[2])};
}

// 7 -----------------------------------------------------------------------
Outcome metrics_oracle() {
  using namespace mf::eval;
  std::vector<std::string> bad;
  if (route_completion({{1.0, 1.0}, {0.5, 1.0}}) != 75.0) bad.push_back("RC");
  if (driving_score({{0.8, 0.5}, {1.0, 1.0}}) != 70.0) bad.push_back("DS");
  const std::vector<InfractionEvent> two_red{{InfractionKind::red_light, 0, 1.0}, {InfractionKind::red_light, 0, 2.0}};
  if (infraction_multiplier(two_red, {}) != 0.49) bad.push_back("P");
  // Fixture RouteLogs scored through the same path as the simulator output.
  control::RouteLog a, b;
  a.completion = 1.0;
  b.completion = 0.5;
  if (route_completion({a.result(), b.result()}) != 75.0) bad.push_back("RouteLog RC");
  Rng rng(5);
  const InfractionKind kinds[] = {InfractionKind::pedestrian, InfractionKind::vehicle, InfractionKind::static_object,
                                  InfractionKind::red_light, InfractionKind::stop_sign, InfractionKind::off_road};
  std::size_t violations = 0;
  for (int f = 0; f < 100; ++f) {
    std::vector<RouteResult> rs;
    const std::size_t routes = 1 + rng.below(6);
    for (std::size_t i = 0; i < routes; ++i) {
      control::RouteLog log;
      log.completion = rng.uniform(0.0, 1.0);
      for (std::size_t e = rng.below(5); e > 0; --e) log.events.push_back({kinds[rng.below(6)], i, double(e)});
      rs.push_back(log.result());
      if (driving_score({rs.back()}) > route_completion({rs.back()})) ++violations;
    }
    if (driving_score(rs) > route_completion(rs)) ++violations;
  }
  if (violations) bad.push_back("DS <= RC");
  std::string list;
  for (const auto& x : bad) list += " " + x;
  return {bad.empty(), bad.empty() ? "RC 75, DS 70, P 0.49 exact; DS <= RC on 100 random fixtures" : "wrong:" + list};
}

// 8 -----------------------------------------------------------------------
Outcome closed_loop() {
  control::RouteScenario sc;
  sc.world.topology = scenes::Topology::straight;
  sc.world.ego_speed_mps = 6.0;
  sc.world.ego = {0.0, 0.3, 0.05};
  sc.route_length_m = 200.0;
  const auto log = control::simulate_route(control::oracle_policy(), sc);
  control::RouteScenario stall;
  stall.max_steps = 160;
  const auto slog = control::simulate_route([](const control::PolicyInput&) { return std::vector<double>(8, 0.0); },
                                            stall);
  bool creep_ok = false;
  for (const auto& s : slog.steps) {
    if (s.creeping) {
      creep_ok = s.target_speed == 4.0;
      break;
    }
  }
  const bool ok = log.completed && log.events.empty() && log.max_lateral_deviation < 0.5 && creep_ok;
  return {ok, fmt("200 m straight: completed %d, %zu infractions, max lateral %.3f m; creep target %s", log.completed,
                  log.events.size(), log.max_lateral_deviation, creep_ok ? "4.0 m/s" : "wrong or absent")};
}

// 9 -----------------------------------------------------------------------
Outcome robustness_sweep() {
  if (!trained) return {false, "no trained model (criterion 5 did not run)"};
  train::RunConfig cfg;
  cfg.load_text("model.dims = desk\neval.routes = 2\neval.route_length = 20\neval.dt = 0.1\neval.max_steps = 150\n");
  const auto& m = trained->model();
  const auto scen = eval::eval_scenarios(cfg, train::sensors_from(m.dims()));
  const auto ctrl = train::controller_from(cfg);
  const auto pen = train::penalties_from(cfg);
  const auto plain = eval::evaluate(
      [&](std::size_t id) { return eval::model_policy(m, eval::unmasked(m.dims().tokens()), id); }, scen, ctrl, pen);
  eval::SweepOptions opt;
  const auto rows = eval::mask_robustness_sweep(m, scen, ctrl, pen, opt);
  const auto csv = eval::sweep_csv(rows);
  const auto lines = std::count(csv.begin(), csv.end(), '\n');
  const bool exact = rows.size() == 4 && rows[0].ds.mean == plain.ds && rows[0].rc.mean == plain.rc &&
                     rows[0].is.mean == plain.is;
  std::string ds;
  for (const auto& r : rows) ds += " " + eval::format_double(r.ds.mean);
  return {lines == 5 && exact, fmt("%ld CSV lines, ratio-0 row %s plain eval (DS %s); DS by ratio:%s", long(lines),
                                   exact ? "equals" : "differs from", eval::format_double(plain.ds).c_str(),
                                   ds.c_str())};
}

// 10 ----------------------------------------------------------------------
Outcome loss_combiner() {
  train::LossWeights w;
  std::vector<std::pair<std::string, double>> parts;
  for (const char* n : {"wp", "bev_seg", "semantic_seg", "bev_prediction", "detection", "velocity", "yaw_class"}) {
    parts.emplace_back(n, 1.0);
  }
  const double total = train::combine_total_values(parts, w);
  std::vector<std::pair<std::string, Tensord>> tparts;
  for (const auto& [n, v] : parts) tparts.emplace_back(n, Tensord::scalar(v));
  const double graph_total = train::combine_total(tparts, w).item();
  std::size_t inexact = 0;
  for (std::size_t drop = 0; drop < parts.size(); ++drop) {
    auto reduced = parts;
    reduced.erase(reduced.begin() + std::ptrdiff_t(drop));
    const double reduced_total = train::combine_total_values(reduced, w);
    if (eval::decimal_difference(total, reduced_total) != w.get(parts[drop].first)) ++inexact;
  }
  return {total == 4.6 && graph_total == 4.6 && inexact == 0,
          fmt("%zu unit parts: total %s (graph %s); %zu/%zu removals differ from their weight", parts.size(),
              eval::format_double(total).c_str(), eval::format_double(graph_total).c_str(), inexact, parts.size())};
}

}  // namespace

int main(int argc, char** argv) {
  // Optional arguments pick which criteria run.
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    if (only.empty() || only.count(id)) ::report(id, name, fn);
  };
  report(1, "gradient fidelity", gradient_fidelity);
  report(2, "paper-dims shapes", shape_exactness);
  report(3, "mask machinery", mask_machinery);
  report(4, "geometry oracle", geometry_oracle);
  report(5, "convergence smoke", convergence_smoke);
  report(6, "MAE ratio ordering", mae_ordering);
  report(7, "metrics oracle", metrics_oracle);
  report(8, "closed loop", closed_loop);
  report(9, "robustness sweep", robustness_sweep);
  report(10, "loss combiner", loss_combiner);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures;
}
