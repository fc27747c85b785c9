#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mf/control/simulate.hpp"
#include "mf/eval/metrics.hpp"
#include "mf/model/model.hpp"
#include "mf/train/config.hpp"

namespace mf::eval {

/// Routes from eval.seed, eval.routes, eval.route_length, eval.dt and eval.max_steps.
std::vector<control::RouteScenario> eval_scenarios(const train::RunConfig& cfg, const scenes::SensorSetup& sensors);

/// Mask plan used at one closed-loop step.
using PlanSource = std::function<model::MaskPlan(std::size_t route_id, std::size_t step)>;

PlanSource unmasked(std::size_t tokens);
/// Fresh plan_mask(N, ratio, .) per step, seeded by (seed, route, step).
PlanSource random_masks(std::size_t tokens, double ratio, std::uint64_t seed);

/// Renders the view, runs the drive path without gradients and returns the predicted waypoints.
control::Policy model_policy(const model::Model<float>& m, PlanSource plans, std::size_t route_id);

struct EvalReport {
  std::vector<control::RouteLog> logs;
  std::vector<RouteResult> results;
  double ds = 0.0, rc = 0.0, is = 0.0;
  std::size_t failures = 0;
};

using PolicyFactory = std::function<control::Policy(std::size_t route_id)>;

EvalReport evaluate(const PolicyFactory& make_policy, const std::vector<control::RouteScenario>& scenarios,
                    const control::ControllerConfig& controller, const PenaltyCoefficients& coeffs);

/// Header "route,rc,is,ds,events,completed,failed", one row per route, then a "mean" row.
std::string eval_csv(const EvalReport& r);

struct SweepRow {
  double ratio = 0.0;
  MeanStd ds, rc, is;
  std::size_t episodes = 0, failures = 0;
};

struct SweepOptions {
  std::vector<double> ratios{0.0, 0.25, 0.5, 0.75};
  std::size_t repeats = 3;
  std::uint64_t seed = 0;
};

/// Runs every scenario once per (ratio, repeat); repeats differ only in their mask draws.
std::vector<SweepRow> mask_robustness_sweep(const model::Model<float>& m,
                                            const std::vector<control::RouteScenario>& scenarios,
                                            const control::ControllerConfig& controller,
                                            const PenaltyCoefficients& coeffs, const SweepOptions& opt);

/// Header "ratio,ds_mean,ds_std,rc_mean,rc_std,is_mean,is_std,episodes,failures".
std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Shortest round-trip decimal.
std::string format_double(double v);

}  // namespace mf::eval
