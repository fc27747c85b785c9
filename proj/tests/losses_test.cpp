#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "mf/train/losses.hpp"

using namespace mf;
using namespace mf::train;

TEST(WaypointLoss, Examples) {
  EXPECT_EQ(waypoint_loss(Tensord({1, 2}, {1, 0}), {0, 0}).item(), 1.0);
  EXPECT_EQ(waypoint_loss(Tensord({2, 2}, {1, 2, 3, 4}), {0, 0, 0, 0}).item(), 10.0);
  EXPECT_EQ(waypoint_loss(Tensord({2, 2}, {1, 2, 3, 4}), {1, 2, 3, 4}).item(), 0.0);
  EXPECT_THROW(waypoint_loss(Tensord({2, 2}, {1, 2, 3, 4}), {0, 0}), TensorError);
}

TEST(ReconLoss, UnitDifferenceAndLambdas) {
  auto im = Tensord::full({3, 2, 2}, 1.0), li = Tensord::full({2, 4}, 2.0);
  std::vector<double> im0(12, 0.0), li0(8, 1.0), li_exact(8, 2.0), im_exact(12, 1.0);
  EXPECT_DOUBLE_EQ(recon_loss(im, li, im0, li0, 1, 1).item(), 2.0);
  EXPECT_EQ(recon_loss(im, li, im_exact, li_exact, 1, 1).item(), 0.0);
  EXPECT_DOUBLE_EQ(recon_loss(im, li, im0, li0, 0, 1).item(), recon_loss(im, li, im_exact, li0, 0, 1).item());
  EXPECT_THROW(recon_loss(im, li, li0, li0, 1, 1), TensorError);
}

TEST(FocalLoss, SingleCenterPixel) {
  auto v = focal_loss(Tensord({1, 1}, {0.5}), {1.0});
  EXPECT_FALSE(v.empty);
  EXPECT_NEAR(v.value.item(), 0.25 * std::log(2.0), 1e-12);
  EXPECT_NEAR(v.value.item(), 0.1733, 1e-4);
  auto perfect = focal_loss(Tensord({1, 3}, {1.0, 0.0, 0.0}), {1.0, 0.0, 0.0});
  EXPECT_LT(perfect.value.item(), 1e-6);
  auto none = focal_loss(Tensord({1, 2}, {0.3, 0.2}), {0.5, 0.0});
  EXPECT_GT(none.value.item(), 0.0);
}

TEST(CrossEntropy, CorrectOneHotAndIgnore) {
  auto logits = Tensord({3, 2}, {60, -60, -60, 60, -60, -60});  // [K=3, positions=2]
  auto v = cross_entropy(logits, {0, 1});
  EXPECT_NEAR(v.value.item(), 0.0, 1e-12);
  auto none = cross_entropy(logits, {-1, -1});
  EXPECT_TRUE(none.empty);
  EXPECT_EQ(none.value.item(), 0.0);
  auto uniform = cross_entropy(Tensord::zeros({4, 1}), {2});
  EXPECT_NEAR(uniform.value.item(), std::log(4.0), 1e-12);
  EXPECT_THROW(cross_entropy(logits, {5, 0}), TensorError);
}

TEST(L1Loss, MaskBehaviour) {
  auto pred = Tensord({2, 2}, {1, 2, 3, 4});
  auto all_false = l1_loss(pred, {0, 0, 0, 0}, {0, 0});
  EXPECT_TRUE(all_false.empty);
  EXPECT_EQ(all_false.value.item(), 0.0);
  EXPECT_DOUBLE_EQ(l1_loss(pred, {0, 0, 0, 0}).value.item(), 2.5);
  // Per-pixel mask tiles over channels: keeps columns 0 of both rows.
  EXPECT_DOUBLE_EQ(l1_loss(pred, {0, 0, 0, 0}, {1, 0}).value.item(), 2.0);
  EXPECT_THROW(l1_loss(pred, {0, 0, 0, 0}, {1, 0, 1}), TensorError);
}

TEST(Combine, PaperWeightsGiveExactTotal) {
  LossWeights w;
  std::vector<std::pair<std::string, double>> parts = {{"wp", 1},        {"bev_seg", 1},  {"semantic_seg", 1},
                                                       {"bev_prediction", 1}, {"detection", 1}, {"velocity", 1},
                                                       {"yaw_class", 1}};
  EXPECT_EQ(combine_total_values(parts, w), 4.6);
  std::vector<std::pair<std::string, Tensord>> tparts;
  for (auto& [n, v] : parts) tparts.emplace_back(n, Tensord::scalar(v));
  EXPECT_EQ(combine_total(tparts, w).item(), 4.6);
  for (std::size_t drop = 0; drop < parts.size(); ++drop) {
    auto reduced = parts;
    reduced.erase(reduced.begin() + drop);
    EXPECT_NEAR(combine_total_values(parts, w) - combine_total_values(reduced, w), w.get(parts[drop].first), 1e-12);
  }
  std::vector<std::pair<std::string, double>> zeros = {{"wp", 0}, {"detection", 0}};
  EXPECT_EQ(combine_total_values(zeros, w), 0.0);
}

TEST(Combine, RejectsNonFiniteAndUnknown) {
  LossWeights w;
  try {
    combine_total_values({{"wp", 1.0}, {"velocity", std::numeric_limits<double>::quiet_NaN()}}, w);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("velocity"), std::string::npos);
  }
  EXPECT_THROW(w.get("nope"), std::invalid_argument);
  EXPECT_THROW(w.set("wp", -1.0), std::invalid_argument);
}

TEST(Combine, GradientIsWeight) {
  LossWeights w;
  auto a = Tensord::scalar(2.0, true), b = Tensord::scalar(3.0, true);
  combine_total<double>({{"wp", a}, {"detection", b}}, w).backward();
  EXPECT_EQ(a.grad()[0], 1.0);
  EXPECT_NEAR(b.grad()[0], 0.2, 1e-15);
}

TEST(LossCsv, HeaderAndRows) {
  auto h = loss_csv_header();
  EXPECT_EQ(h.rfind("step,", 0), 0u);
  EXPECT_NE(h.find(",total"), std::string::npos);
  auto row = loss_csv_row(3, {{"wp", 1.5}}, 1.5);
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), std::count(h.begin(), h.end(), ','));
}
