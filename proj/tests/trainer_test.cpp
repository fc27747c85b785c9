#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "mf/train/trainer.hpp"

using namespace mf;
using namespace mf::train;

namespace {

std::vector<scenes::SceneSample> tiny_data(std::size_t n, std::uint64_t seed) {
  const auto setup = sensors_from(model::ModelDims::tiny());
  std::vector<scenes::SceneSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(scenes::generate_scene(scenes::random_spec(seed + i, scenes::TopologyMix{}, setup), setup));
  }
  return out;
}

RunConfig tiny_config() {
  RunConfig c;
  c.load_text("model.dims = tiny\noptim.lr = 0.003\ntrain.epochs = 50\ntrain.augment = false\n");
  return c;
}

std::string tmp(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "mf_trainer_test";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST(Config, ParsesAndRejects) {
  RunConfig c;
  c.load_text("# comment\nseed = 7\nmask_ratio = 0.5\nsweep.ratios = 0, 0.25,0.5\n");
  EXPECT_EQ(c.integer("seed"), 7);
  EXPECT_DOUBLE_EQ(c.real("mask_ratio"), 0.5);
  EXPECT_EQ(c.reals("sweep.ratios").size(), 3u);
  EXPECT_THROW(c.set("no.such.key", "1"), ConfigError);
  EXPECT_THROW(c.set("seed", "abc"), ConfigError);
  try {
    c.load_text("seed = 1\nbogus = 2\n", "run.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("run.cfg:2"), std::string::npos);
  }
  RunConfig d;
  d.load_text(c.dump());
  EXPECT_EQ(d.dump(), c.dump());
}

TEST(Config, EnvSeed) {
  RunConfig c;
  setenv("MF_SEED", "99", 1);
  c.apply_env();
  unsetenv("MF_SEED");
  EXPECT_EQ(c.integer("seed"), 99);
}

TEST(Trainer, LrDropsAtConfiguredEpoch) {
  auto c = tiny_config();
  c.set("optim.lr_drop_epoch", "2");
  Trainer t(Phase::train, c, tiny_data(3, 1));
  EXPECT_EQ(t.steps_per_epoch(), 3);
  EXPECT_DOUBLE_EQ(t.lr_at(5), 0.003);
  EXPECT_NEAR(t.lr_at(6), 0.0003, 1e-12);
}

TEST(Trainer, DriveLossFallsOnSmallSet) {
  auto c = tiny_config();
  Trainer t(Phase::train, c, tiny_data(2, 3));
  const auto first = t.step();
  EXPECT_EQ(first.parts.size(), 8u);
  StepReport last;
  for (int i = 0; i < 60; ++i) last = t.step();
  EXPECT_LT(last.total, first.total * 0.7);
}

TEST(Trainer, PretrainPartsFollowTarget) {
  auto c = tiny_config();
  Trainer s(Phase::pretrain, c, tiny_data(1, 5));
  auto r = s.step();
  EXPECT_TRUE(r.parts.count("recon_image") && r.parts.count("recon_lidar") && r.parts.count("depth"));
  c.set("recon_target", "token");
  c.set("train.pretrain_aux", "false");
  Trainer k(Phase::pretrain, c, tiny_data(1, 5));
  r = k.step();
  EXPECT_EQ(r.parts.size(), 1u);
  EXPECT_TRUE(r.parts.count("recon_token"));
}

TEST(Trainer, ResumeMatchesUninterrupted) {
  auto c = tiny_config();
  c.set("train.augment", "true");
  c.set("train.batch_size", "2");
  const auto data = tiny_data(3, 11);
  Trainer a(Phase::train, c, data);
  for (int i = 0; i < 4; ++i) a.step();
  const std::string ck = tmp("resume.mfck");
  Trainer b(Phase::train, c, data);
  for (int i = 0; i < 2; ++i) b.step();
  b.save(ck);
  Trainer r(Phase::train, c, data);
  r.resume(ck);
  EXPECT_EQ(r.steps_done(), 2);
  for (int i = 0; i < 2; ++i) r.step();
  const auto& pa = a.model().params().entries();
  const auto& pr = r.model().params().entries();
  ASSERT_EQ(pa.size(), pr.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const auto x = pa[i].second.data(), y = pr[i].second.data();
    ASSERT_TRUE(std::equal(x.begin(), x.end(), y.begin())) << pa[i].first;
  }
}

TEST(Trainer, InitFromRejectsOtherDims) {
  auto c = tiny_config();
  Trainer a(Phase::pretrain, c, tiny_data(1, 2));
  const std::string ck = tmp("tiny.mfck");
  a.save(ck);
  Trainer b(Phase::train, c, tiny_data(1, 2));
  EXPECT_EQ(b.init_from(ck), b.model().params().size());
  auto other = c;
  other.set("model.dims", "desk");
  std::vector<scenes::SceneSample> desk_data{
      scenes::generate_scene(scenes::random_spec(1, {}, sensors_from(model::ModelDims::desk())),
                             sensors_from(model::ModelDims::desk()))};
  Trainer d(Phase::train, other, desk_data);
  try {
    d.init_from(ck);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("mismatched parameters"), std::string::npos);
  }
}

TEST(Trainer, RunWritesCsvAndCheckpoint) {
  auto c = tiny_config();
  c.set("train.max_steps", "3");
  Trainer t(Phase::train, c, tiny_data(2, 4));
  const auto csv = tmp("loss.csv"), ck = tmp("run.mfck");
  auto s = run_training(t, csv, ck, 2);
  EXPECT_EQ(s.history.size(), 3u);
  std::ifstream in(csv);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 4);
  EXPECT_TRUE(std::filesystem::exists(ck));
}

TEST(Trainer, RejectsMismatchedSamples) {
  auto c = tiny_config();
  c.set("model.dims", "desk");
  EXPECT_THROW(Trainer(Phase::train, c, tiny_data(1, 1)), std::runtime_error);
}
