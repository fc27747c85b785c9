#include <gtest/gtest.h>

#include "mf/eval/evaluate.hpp"

using namespace mf;
using namespace mf::eval;

namespace {

train::RunConfig short_routes() {
  train::RunConfig c;
  c.load_text("model.dims = tiny\neval.routes = 2\neval.route_length = 10\neval.max_steps = 60\neval.dt = 0.1\n"
              "data.topology_mix = straight=1\n");
  return c;
}

}  // namespace

TEST(Eval, OracleHasNoInfractions) {
  const auto c = short_routes();
  const auto scen = eval_scenarios(c, train::sensors_from(model::ModelDims::tiny()));
  auto c2 = c;
  c2.set("eval.max_steps", "400");
  const auto longer = eval_scenarios(c2, train::sensors_from(model::ModelDims::tiny()));
  auto r = evaluate([](std::size_t) { return control::oracle_policy(); }, longer, {}, {});
  EXPECT_DOUBLE_EQ(r.is, 1.0);
  EXPECT_EQ(r.ds, r.rc);
  EXPECT_EQ(r.failures, 0u);
  EXPECT_NE(eval_csv(r).find("mean,"), std::string::npos);
  EXPECT_EQ(scen.size(), 2u);
}

TEST(Eval, ZeroRatioPlanIsIdentity) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto p = model::plan_mask(12, 0.0, s), id = model::MaskPlan::identity(12);
    EXPECT_EQ(p.kept, id.kept);
    EXPECT_EQ(p.restore, id.restore);
  }
}

TEST(Eval, MeanStdOfRepeatsIsExact) {
  const double x = 37.123456789012345;
  const auto m = mean_std({x, x, x});
  EXPECT_EQ(m.mean, x);
  EXPECT_EQ(m.std, 0.0);
}

TEST(Eval, SweepZeroRowMatchesPlainEval) {
  const auto c = short_routes();
  const auto dims = model::ModelDims::tiny();
  model::Model<float> m(dims, 3);
  const auto scen = eval_scenarios(c, train::sensors_from(dims));
  auto plain = evaluate([&](std::size_t id) { return model_policy(m, unmasked(dims.tokens()), id); }, scen, {}, {});
  SweepOptions opt;
  opt.repeats = 2;
  auto rows = mask_robustness_sweep(m, scen, {}, {}, opt);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].ds.mean, plain.ds);
  EXPECT_EQ(rows[0].rc.mean, plain.rc);
  EXPECT_EQ(rows[0].is.mean, plain.is);
  EXPECT_EQ(rows[0].ds.std, 0.0);
  EXPECT_EQ(rows[2].episodes, 4u);
  const auto csv = sweep_csv(rows);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}
