#include "mf/eval/evaluate.hpp"

#include <charconv>
#include <sstream>

#include "mf/train/trainer.hpp"

namespace mf::eval {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<control::RouteScenario> eval_scenarios(const train::RunConfig& cfg, const scenes::SensorSetup& sensors) {
  const auto mix = scenes::TopologyMix::parse(cfg.text("data.topology_mix"));
  const auto n = cfg.integer("eval.routes");
  if (n < 1) throw train::ConfigError("eval.routes must be at least 1");
  std::vector<control::RouteScenario> out;
  for (std::int64_t i = 0; i < n; ++i) {
    control::RouteScenario s;
    s.route_id = static_cast<std::size_t>(i);
    s.world = scenes::random_spec(static_cast<std::uint64_t>(cfg.integer("eval.seed") + i), mix, sensors);
    s.route_length_m = cfg.real("eval.route_length");
    s.dt = cfg.real("eval.dt");
    s.max_steps = static_cast<std::size_t>(cfg.integer("eval.max_steps"));
    s.start_speed = 0.0;
    s.sensors = sensors;
    out.push_back(s);
  }
  return out;
}

PlanSource unmasked(std::size_t tokens) {
  return [plan = model::MaskPlan::identity(tokens)](std::size_t, std::size_t) { return plan; };
}

PlanSource random_masks(std::size_t tokens, double ratio, std::uint64_t seed) {
  return [=](std::size_t route, std::size_t step) {
    return model::plan_mask(tokens, ratio, mix64(mix64(seed ^ (std::uint64_t(route) << 32)) + step));
  };
}

control::Policy model_policy(const model::Model<float>& m, PlanSource plans, std::size_t route_id) {
  return [&m, plans = std::move(plans), route_id](const control::PolicyInput& in) {
    NoGradGuard g;
    const auto view = in.render();
    auto out = m.drive_forward(train::camera_tensor(view), train::lidar_tensor(view), in.target_x, in.target_y,
                               plans(route_id, in.step));
    const auto w = out.waypoints.data();
    return std::vector<double>(w.begin(), w.end());
  };
}

EvalReport evaluate(const PolicyFactory& make_policy, const std::vector<control::RouteScenario>& scenarios,
                    const control::ControllerConfig& controller, const PenaltyCoefficients& coeffs) {
  EvalReport r;
  for (const auto& s : scenarios) {
    r.logs.push_back(control::simulate_route(make_policy(s.route_id), s, controller));
    r.results.push_back(r.logs.back().result(coeffs));
    if (r.logs.back().failed) ++r.failures;
  }
  r.ds = driving_score(r.results);
  r.rc = route_completion(r.results);
  r.is = infraction_score(r.results);
  return r;
}

std::string eval_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "route,rc,is,ds,events,completed,failed\n";
  for (std::size_t i = 0; i < r.logs.size(); ++i) {
    const auto& res = r.results[i];
    os << r.logs[i].route_id << ',' << format_double(driving_score({{res.completion, 1.0}})) << ','
       << format_double(res.multiplier) << ',' << format_double(driving_score({res})) << ','
       << r.logs[i].events.size() << ',' << int(r.logs[i].completed) << ',' << int(r.logs[i].failed) << '\n';
  }
  os << "mean," << format_double(r.rc) << ',' << format_double(r.is) << ',' << format_double(r.ds) << ",,,"
     << r.failures << '\n';
  return os.str();
}

std::vector<SweepRow> mask_robustness_sweep(const model::Model<float>& m,
                                            const std::vector<control::RouteScenario>& scenarios,
                                            const control::ControllerConfig& controller,
                                            const PenaltyCoefficients& coeffs, const SweepOptions& opt) {
  if (opt.repeats < 1) throw std::invalid_argument("sweep needs at least one repeat");
  std::vector<SweepRow> rows;
  const std::size_t n = m.dims().tokens();
  for (double ratio : opt.ratios) {
    SweepRow row;
    row.ratio = ratio;
    std::vector<double> ds, rc, is;
    for (std::size_t rep = 0; rep < opt.repeats; ++rep) {
      const auto plans = random_masks(n, ratio, mix64(opt.seed + rep));
      auto rep_report = evaluate([&](std::size_t id) { return model_policy(m, plans, id); }, scenarios, controller,
                                 coeffs);
      ds.push_back(rep_report.ds);
      rc.push_back(rep_report.rc);
      is.push_back(rep_report.is);
      row.episodes += rep_report.logs.size();
      row.failures += rep_report.failures;
    }
    row.ds = mean_std(ds);
    row.rc = mean_std(rc);
    row.is = mean_std(is);
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "ratio,ds_mean,ds_std,rc_mean,rc_std,is_mean,is_std,episodes,failures\n";
  for (const auto& r : rows) {
    os << format_double(r.ratio) << ',' << format_double(r.ds.mean) << ',' << format_double(r.ds.std) << ','
       << format_double(r.rc.mean) << ',' << format_double(r.rc.std) << ',' << format_double(r.is.mean) << ','
       << format_double(r.is.std) << ',' << r.episodes << ',' << r.failures << '\n';
  }
  return os.str();
}

}  // namespace mf::eval
