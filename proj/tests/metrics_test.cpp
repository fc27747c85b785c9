#include <gtest/gtest.h>

#include <algorithm>

#include "mf/autodiff/rng.hpp"
#include "mf/eval/metrics.hpp"

using namespace mf;
using namespace mf::eval;

TEST(Metrics, RouteCompletion) {
  EXPECT_EQ(route_completion({{1.0, 1.0}, {1.0, 1.0}}), 100.0);
  EXPECT_EQ(route_completion({{1.0, 1.0}, {0.5, 1.0}}), 75.0);
  EXPECT_EQ(route_completion({{0.8, 1.0}, {1.0, 1.0}, {0.3, 1.0}}), 70.0);
  EXPECT_THROW(route_completion({}), std::invalid_argument);
}

TEST(Metrics, Multiplier) {
  EXPECT_EQ(infraction_multiplier({}), 1.0);
  EXPECT_EQ(infraction_multiplier({{InfractionKind::vehicle, 0, 1.0}}), 0.6);
  EXPECT_EQ(infraction_multiplier({{InfractionKind::red_light, 0, 1.0}, {InfractionKind::red_light, 0, 2.0}}), 0.49);
  EXPECT_EQ(infraction_multiplier({{InfractionKind::off_road, 0, 1.0}}), 1.0);
  PenaltyCoefficients floored;
  floored.floor = 0.3;
  std::vector<InfractionEvent> many(6, {InfractionKind::pedestrian, 0, 0.0});
  EXPECT_EQ(infraction_multiplier(many, floored), 0.3);
  EXPECT_THROW(floored.set(InfractionKind::vehicle, 1.5), std::invalid_argument);
  EXPECT_THROW(parse_infraction("speeding"), std::invalid_argument);
  EXPECT_EQ(parse_infraction("red_light"), InfractionKind::red_light);
}

TEST(Metrics, DrivingScore) {
  EXPECT_EQ(driving_score({{1.0, 1.0}, {1.0, 1.0}}), 100.0);
  EXPECT_EQ(driving_score({{0.8, 0.5}, {1.0, 1.0}}), 70.0);
  EXPECT_EQ(infraction_score({{0.8, 0.5}, {1.0, 1.0}}), 0.75);
}

TEST(Metrics, DsNeverExceedsRcAndOrderFree) {
  Rng rng(4);
  const std::vector<InfractionKind> kinds = {InfractionKind::pedestrian, InfractionKind::vehicle,
                                             InfractionKind::static_object, InfractionKind::red_light,
                                             InfractionKind::stop_sign};
  for (int f = 0; f < 100; ++f) {
    std::vector<RouteResult> routes;
    const std::size_t n = 1 + rng.below(8);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<InfractionEvent> ev;
      for (std::size_t k = rng.below(4); k > 0; --k) ev.push_back({kinds[rng.below(kinds.size())], i, 0.0});
      const double p = infraction_multiplier(ev);
      std::reverse(ev.begin(), ev.end());
      ASSERT_EQ(p, infraction_multiplier(ev));
      routes.push_back({rng.uniform(), p});
    }
    ASSERT_LE(driving_score(routes), route_completion(routes));
    auto shuffled = routes;
    std::reverse(shuffled.begin(), shuffled.end());
    ASSERT_EQ(driving_score(routes), driving_score(shuffled));
    ASSERT_EQ(route_completion(routes), route_completion(shuffled));
  }
}

TEST(Metrics, MeanStd) {
  auto m = mean_std({1.0, 3.0});
  EXPECT_EQ(m.mean, 2.0);
  EXPECT_EQ(m.std, 1.0);
}
