#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mf/autodiff/grad_check.hpp"
#include "mf/autodiff/ops.hpp"
#include "mf/autodiff/optim.hpp"
#include "mf/autodiff/records.hpp"
#include "mf/autodiff/rng.hpp"

using namespace mf;

namespace {

Tensorf random_f(const Shape& s, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(shape_numel(s));
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return Tensorf(s, v);
}

}  // namespace

TEST(Tensor, ShapeMustMatchValues) {
  EXPECT_THROW(Tensorf({2, 3}, std::vector<float>(5)), TensorError);
  Tensorf t({2, 3}, std::vector<float>(6, 1.f));
  EXPECT_EQ(t.numel(), 6u);
}

TEST(Ops, MatmulIdentityPadded) {
  Tensorf a({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensorf eye({3, 2}, {1, 0, 0, 1, 0, 0});
  auto c = matmul(a, eye);
  EXPECT_EQ(c.shape(), (Shape{2, 2}));
  EXPECT_FLOAT_EQ(c.at({0, 0}), 1);
  EXPECT_FLOAT_EQ(c.at({0, 1}), 2);
  EXPECT_FLOAT_EQ(c.at({1, 0}), 4);
  EXPECT_FLOAT_EQ(c.at({1, 1}), 5);
}

TEST(Ops, ShapeMismatchNamesOpAndShapes) {
  Tensorf a = Tensorf::zeros({2, 3}), b = Tensorf::zeros({2, 3});
  try {
    matmul(a, b);
    FAIL() << "expected throw";
  } catch (const TensorError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos);
    EXPECT_NE(msg.find("(2, 3)"), std::string::npos);
  }
}

TEST(Ops, SoftmaxOfUniformIsUniform) {
  auto y = softmax(Tensorf({4}, {0.3f, 0.3f, 0.3f, 0.3f}));
  for (float v : y.data()) EXPECT_FLOAT_EQ(v, 0.25f);
}

TEST(Ops, SoftmaxRowsSumToOneAndNonNegative) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto x = scale(random_f({7, 13}, seed), 20.f);
    auto y = softmax(x);
    for (std::size_t r = 0; r < 7; ++r) {
      double total = 0;
      for (std::size_t j = 0; j < 13; ++j) {
        EXPECT_GE(y.at({r, j}), 0.f);
        total += y.at({r, j});
      }
      EXPECT_NEAR(total, 1.0, 1e-5);
    }
  }
}

TEST(Ops, Conv2dOfOnesIsNine) {
  // Direct summation: 9 products of 1 * 1.
  Tensorf x = Tensorf::full({1, 1, 3, 3}, 1.f);
  Tensorf w = Tensorf::full({1, 1, 3, 3}, 1.f);
  auto y = conv2d(x, w, Tensorf(), 1, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_FLOAT_EQ(y.item(), 9.f);
}

TEST(Ops, Conv2dMatchesDirectSummation) {
  auto x = random_f({2, 3, 7, 6}, 11);
  auto w = random_f({4, 3, 3, 3}, 12);
  auto b = random_f({4}, 13);
  for (std::size_t stride : {1u, 2u}) {
    auto y = conv2d(x, w, b, stride, 1);
    const std::size_t ho = y.dim(2), wo = y.dim(3);
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t co = 0; co < 4; ++co)
        for (std::size_t oy = 0; oy < ho; ++oy)
          for (std::size_t ox = 0; ox < wo; ++ox) {
            double acc = b.at({co});
            for (std::size_t ci = 0; ci < 3; ++ci)
              for (std::size_t ky = 0; ky < 3; ++ky)
                for (std::size_t kx = 0; kx < 3; ++kx) {
                  const long iy = static_cast<long>(oy * stride + ky) - 1;
                  const long ix = static_cast<long>(ox * stride + kx) - 1;
                  if (iy < 0 || ix < 0 || iy >= 7 || ix >= 6) continue;
                  acc += x.at({n, ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)}) * w.at({co, ci, ky, kx});
                }
            EXPECT_NEAR(y.at({n, co, oy, ox}), acc, 1e-5);
          }
  }
}

TEST(Ops, ConvTransposeIsAdjointOfConv) {
  // <conv(x), y> == <x, conv_transpose(y)> for matching geometry.
  auto x = random_f({1, 3, 8, 8}, 1);
  auto w = random_f({4, 3, 2, 2}, 2);
  auto y = random_f({1, 4, 4, 4}, 3);
  auto cx = conv2d(x, w, Tensorf(), 2, 0);
  auto ty = conv_transpose2d(y, w, Tensorf(), 2, 0);
  ASSERT_EQ(ty.shape(), x.shape());
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < cx.numel(); ++i) lhs += cx.data()[i] * y.data()[i];
  for (std::size_t i = 0; i < x.numel(); ++i) rhs += x.data()[i] * ty.data()[i];
  EXPECT_NEAR(lhs, rhs, 1e-4);
}

TEST(Ops, ReshapeAndTransposeRoundTripsAreBitExact) {
  auto x = random_f({3, 4, 5}, 9);
  auto r = reshape(reshape(x, {12, 5}), {3, 4, 5});
  auto t = permute(permute(x, {2, 0, 1}), {1, 2, 0});
  auto m = transpose(transpose(reshape(x, {6, 10})));
  for (std::size_t i = 0; i < x.numel(); ++i) {
    EXPECT_EQ(r.data()[i], x.data()[i]);
    EXPECT_EQ(t.data()[i], x.data()[i]);
    EXPECT_EQ(m.data()[i], x.data()[i]);
  }
}

TEST(Backward, SumGivesOnes) {
  Tensorf x = random_f({2, 3, 4}, 5);
  x.set_requires_grad(true);
  sum(x).backward();
  for (float g : x.grad()) EXPECT_FLOAT_EQ(g, 1.f);
}

TEST(Backward, SumOfSquares) {
  Tensorf x({3}, {1, 2, 3}, true);
  sum(mul(x, x)).backward();
  EXPECT_FLOAT_EQ(x.grad()[0], 2.f);
  EXPECT_FLOAT_EQ(x.grad()[1], 4.f);
  EXPECT_FLOAT_EQ(x.grad()[2], 6.f);
}

TEST(Backward, FanOutAccumulates) {
  Tensorf x({2}, {1.5f, -2.f}, true);
  auto y = add(scale(x, 3.f), exp(x));
  sum(y).backward();
  EXPECT_NEAR(x.grad()[0], 3.0 + std::exp(1.5), 1e-5);
  EXPECT_NEAR(x.grad()[1], 3.0 + std::exp(-2.0), 1e-6);
}

TEST(Backward, NonScalarLossFails) {
  Tensorf x({2}, {1, 2}, true);
  EXPECT_THROW(scale(x, 2.f).backward(), TensorError);
}

TEST(Backward, SecondBackwardWithoutRebuildFails) {
  Tensorf x({2}, {1, 2}, true);
  auto loss = sum(square(x));
  loss.backward();
  EXPECT_THROW(loss.backward(), TensorError);
}

TEST(Backward, EveryReachableLeafGetsGrad) {
  Tensorf a({2}, {1, 2}, true), b({2}, {3, 4}, true), unused({2}, {0, 0}, true);
  auto loss = sum(mul(a, scale(b, 0.f)));
  loss.backward();
  EXPECT_TRUE(a.has_grad());
  EXPECT_TRUE(b.has_grad());
  EXPECT_FALSE(unused.has_grad());
}

TEST(Backward, NoGradGuardRecordsNothing) {
  Tensorf x({2}, {1, 2}, true);
  NoGradGuard guard;
  auto y = sum(x);
  EXPECT_FALSE(y.requires_grad());
}

TEST(GradCheck, SpecExamples) {
  EXPECT_LT(grad_check_op("softmax", {{2, 5}}, 7), 1e-4);
  EXPECT_LT(grad_check_op("layer_norm", {{3, 8}}, 1), 1e-4);
  EXPECT_LT(grad_check_op("conv2d", {{1, 2, 6, 6}}, 3), 1e-4);
}

TEST(GradCheck, WholeCatalogFiveSeeds) {
  for (const auto& c : catalog_cases()) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const double err = grad_check_op(c.op, c.shapes, seed);
      EXPECT_LT(err, 1e-4) << c.op << " seed " << seed;
    }
  }
}

TEST(GradCheck, UnknownOpThrows) { EXPECT_THROW(grad_check_op("nope", {{2}}, 0), TensorError); }

TEST(AdamW, ZeroGradZeroDecayLeavesParams) {
  std::vector<float> p{1.f, -2.f}, g{0.f, 0.f}, m(2, 0.f), v(2, 0.f);
  AdamWConfig cfg{0.1, 0.9, 0.999, 1e-8, 0.0};
  adamw_update<float>(p, std::span<const float>(g), m, v, 1, cfg);
  EXPECT_FLOAT_EQ(p[0], 1.f);
  EXPECT_FLOAT_EQ(p[1], -2.f);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  // m_hat = v_hat = 1 after bias correction, so the step is lr / (1 + eps).
  std::vector<double> p{0.5}, g{1.0}, m{0.0}, v{0.0};
  AdamWConfig cfg{0.1, 0.9, 0.999, 1e-8, 0.0};
  adamw_update<double>(p, std::span<const double>(g), m, v, 1, cfg);
  EXPECT_NEAR(p[0], 0.5 - 0.1 / (1.0 + 1e-8), 1e-12);
}

TEST(AdamW, DecoupledDecayShrinks) {
  std::vector<double> p{2.0}, g{0.0}, m{0.0}, v{0.0};
  AdamWConfig cfg{0.1, 0.9, 0.999, 1e-8, 0.01};
  adamw_update<double>(p, std::span<const double>(g), m, v, 1, cfg);
  EXPECT_NEAR(p[0], 2.0 * (1.0 - 0.001), 1e-12);
}

TEST(AdamW, ShapeMismatchFails) {
  std::vector<float> p{1.f}, g{0.f, 0.f}, m(1), v(1);
  EXPECT_THROW(adamw_update<float>(p, std::span<const float>(g), m, v, 1, AdamWConfig{}), TensorError);
}

TEST(Rng, DeterministicAndSplitIndependent) {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng s1 = Rng(42).split(1), s2 = Rng(42).split(2);
  EXPECT_NE(s1.next_u64(), s2.next_u64());
  Rng t(3);
  for (int i = 0; i < 1000; ++i) EXPECT_LE(std::abs(t.truncated_normal(0.02)), 0.04);
}

TEST(Checkpoint, BitExactRoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "mf_ckpt_test.mfck").string();
  std::vector<ArrayRecord> recs{
      ArrayRecord::from_f32("enc/w", {2, 3}, {1.f, -0.f, 3.5f, 1e-30f, -7.f, 0.1f}),
      ArrayRecord::from_f64("opt/step", {1}, {12.0}),
      ArrayRecord::from_i32("ids", {3}, {1, -2, 3}),
      ArrayRecord::from_u8("labels", {2, 2}, {0, 1, 2, 255}),
  };
  save_checkpoint(path, recs);
  auto back = load_checkpoint(path);
  EXPECT_EQ(back, recs);
  std::ifstream is(path, std::ios::binary);
  char magic[4];
  is.read(magic, 4);
  EXPECT_EQ(std::string(magic, 4), "MFCK");
  std::filesystem::remove(path);
}

TEST(Checkpoint, TruncationReportsOffset) {
  const auto path = (std::filesystem::temp_directory_path() / "mf_ckpt_trunc.mfck").string();
  save_checkpoint(path, {ArrayRecord::from_f32("w", {4}, {1, 2, 3, 4})});
  const auto full = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, full - 3);
  try {
    load_checkpoint(path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), full - 3);
  }
  std::filesystem::remove(path);
}
