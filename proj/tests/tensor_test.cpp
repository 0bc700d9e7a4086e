/* Copyright 2026 The DPC Search Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "dpc/dpc.hpp"
#include "op_instances.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace dpc {
namespace {

using testutil::random_tensor;

using namespace optest;

class OpSuite : public ::testing::TestWithParam<OpKind> {};

TEST_P(OpSuite, Gradcheck64) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    auto inst = make_instance<double>(GetParam(), rng);
    EXPECT_LE(gradcheck<double>(inst.fn, inst.inputs, 1e-6), 1e-4) << "seed " << seed;
  }
}

TEST_P(OpSuite, Gradcheck32) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(2000 + seed);
    auto inst = make_instance<float>(GetParam(), rng);
    EXPECT_LE(gradcheck<float>(inst.fn, inst.inputs, 1e-2), 1e-2) << "seed " << seed;
  }
}

TEST_P(OpSuite, MatchesOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(3000 + seed);
    auto inst = make_instance<double>(GetParam(), rng);
    std::vector<oracle::Array> arrays;
    for (const auto& t : inst.inputs) arrays.push_back(oracle::from_tensor(t));
    const oracle::Array want = inst.reference(arrays);
    const oracle::Array got = oracle::from_tensor(inst.fn(inst.inputs));
    ASSERT_EQ(got.v.size(), want.v.size());
    EXPECT_LE(oracle::max_rel_diff(got, want), 1e-6) << "seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpSuite, ::testing::ValuesIn(kAllOps),
                         [](const auto& info) { return op_name(info.param); });

TEST(GradcheckTest, LinearMapIsExact) {
  std::mt19937_64 rng(4);
  std::vector<Tensor64> in = {random_tensor<double>({1, 3, 4, 4}, rng),
                              random_tensor<double>({2, 3, 1, 1}, rng)};
  const double err = gradcheck<double>(
      [](const auto& v) { return conv1x1(v[0], v[1], Tensor64()); }, in, 1e-6);
  EXPECT_LE(err, 1e-8);
}

TEST(GradcheckTest, SpecInstances) {
  std::mt19937_64 rng(5);
  auto c = make_instance<double>(OpKind::kConv1x1, rng);
  EXPECT_LE(gradcheck<double>(c.fn, c.inputs, 1e-6), 1e-6);
  auto s = make_instance<double>(OpKind::kSepConv, rng);
  EXPECT_LE(gradcheck<double>(s.fn, s.inputs, 1e-6), 1e-4);
}

TEST(Conv1x1Test, IdentityAndOnes) {
  std::mt19937_64 rng(6);
  Tensor x = random_tensor<float>({2, 3, 4, 5}, rng);
  Tensor eye({3, 3, 1, 1});
  for (int i = 0; i < 3; ++i) eye.at(i, i, 0, 0) = 1.0f;
  const Tensor y = conv1x1(x, eye, Tensor({3, 1, 1, 1}));
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);

  const Tensor ones = conv1x1(Tensor({1, 3, 4, 4}, 1.0f), Tensor({2, 3, 1, 1}, 1.0f),
                              Tensor({2, 1, 1, 1}, 0.0f));
  for (float v : ones.data()) EXPECT_EQ(v, 3.0f);
}

TEST(Conv1x1Test, ShapeErrorNamesBothShapes) {
  try {
    conv1x1(Tensor({1, 3, 4, 4}), Tensor({2, 5, 1, 1}), Tensor({2, 1, 1, 1}));
    FAIL();
  } catch (const ShapeError& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("(2,5,1,1)"), std::string::npos);
    EXPECT_NE(m.find("(1,3,4,4)"), std::string::npos);
  }
}

TEST(Conv1x1Test, Linearity) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 20; ++t) {
    const Tensor64 x = random_tensor<double>({1, 4, 5, 6}, rng);
    const Tensor64 y = random_tensor<double>({1, 4, 5, 6}, rng);
    const Tensor64 w = random_tensor<double>({3, 4, 1, 1}, rng);
    const double a = 1.7, b = -0.4;
    Tensor64 mix({1, 4, 5, 6});
    for (std::size_t i = 0; i < mix.numel(); ++i)
      mix.data()[i] = a * x.data()[i] + b * y.data()[i];
    const Tensor64 lhs = conv1x1(mix, w, Tensor64());
    const Tensor64 cx = conv1x1(x, w, Tensor64()), cy = conv1x1(y, w, Tensor64());
    oracle::Array rhs = oracle::from_tensor(cx);
    for (std::size_t i = 0; i < rhs.v.size(); ++i) rhs.v[i] = a * cx.data()[i] + b * cy.data()[i];
    EXPECT_LE(oracle::max_rel_diff(oracle::from_tensor(lhs), rhs), 1e-6);
  }
}

ConvParams<double> identity_pointwise(int c) {
  Tensor64 w({c, c, 1, 1});
  for (int i = 0; i < c; ++i) w.at(i, i, 0, 0) = 1.0;
  return {w, Tensor64({c, 1, 1, 1})};
}

TEST(SepConvTest, DeltaKernelIsIdentity) {
  std::mt19937_64 rng(9);
  const Tensor64 x = random_tensor<double>({1, 2, 6, 6}, rng);
  Tensor64 dw({2, 1, 3, 3});
  dw.at(0, 0, 1, 1) = dw.at(1, 0, 1, 1) = 1.0;
  const Tensor64 y = atrous_sep_conv3x3(x, 1, 1, {dw, {}}, identity_pointwise(2));
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(SepConvTest, RateOneMatchesDenseSeparableExactly) {
  for (int t = 0; t < 20; ++t) {
    std::mt19937_64 rng(100 + t);
    const Tensor64 x = random_tensor<double>({1, 3, 4, 4}, rng);
    const Tensor64 dw = random_tensor<double>({3, 1, 3, 3}, rng);
    const Tensor64 pw = random_tensor<double>({2, 3, 1, 1}, rng);
    const Tensor64 pb = random_tensor<double>({2, 1, 1, 1}, rng);
    const Tensor64 y = atrous_sep_conv3x3(x, 1, 1, {dw, {}}, {pw, pb});
    const oracle::Array want = oracle::conv1x1(
        oracle::depthwise(oracle::from_tensor(x), oracle::to_vec(dw), 1, 1), oracle::to_vec(pw),
        oracle::to_vec(pb), 2);
    for (std::size_t i = 0; i < want.v.size(); ++i) EXPECT_EQ(y.data()[i], want.v[i]);
  }
}

TEST(SepConvTest, ImpulseResponseRate3x1) {
  Tensor64 x({1, 1, 9, 9});
  x.at(0, 0, 4, 4) = 1.0;
  Tensor64 dw({1, 1, 3, 3});
  for (int k = 0; k < 9; ++k) dw.data()[k] = k + 1.0;
  const Tensor64 y = depthwise_atrous3x3(x, dw, 3, 1);
  int nonzero = 0;
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 9; ++j) {
      const double v = y.at(0, 0, i, j);
      if (v == 0.0) continue;
      ++nonzero;
      const int du = i - 4, dv = j - 4;
      ASSERT_TRUE((du == -3 || du == 0 || du == 3) && dv >= -1 && dv <= 1) << i << "," << j;
      // Output (i,j) reads x at (i + 3u, j + v); the impulse is hit when u = -du/3.
      EXPECT_EQ(v, dw.data()[(1 - du / 3) * 3 + (1 - dv)]);
    }
  EXPECT_EQ(nonzero, 9);
}

TEST(SepConvTest, IllegalRateAndShape) {
  Tensor x({1, 2, 4, 4});
  ConvParams<float> dw{Tensor({2, 1, 3, 3}), {}}, pw{Tensor({2, 2, 1, 1}), Tensor({2, 1, 1, 1})};
  EXPECT_THROW(atrous_sep_conv3x3(x, 2, 1, dw, pw), ArgumentError);
  ConvParams<float> bad{Tensor({3, 1, 3, 3}), {}};
  EXPECT_THROW(atrous_sep_conv3x3(x, 1, 1, bad, pw), ShapeError);
}

TEST(PyramidPoolTest, GlobalMeanTiles) {
  const Tensor64 x = Tensor64::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  const Tensor64 y = avg_pyramid_pool(x, 1, 1, identity_pointwise(1));
  for (double v : y.data()) EXPECT_EQ(v, 2.5);
}

TEST(PyramidPoolTest, ConstantInputAnyGrid) {
  const Tensor64 x({1, 2, 8, 8}, 0.75);
  for (int gh : kGrids)
    for (int gw : kGrids) {
      const Tensor64 y = avg_pyramid_pool(x, gh, gw, identity_pointwise(2));
      for (double v : y.data()) EXPECT_NEAR(v, 0.75, 1e-15);
    }
}

TEST(PyramidPoolTest, Grid2x2On4x4MatchesOracle) {
  std::mt19937_64 rng(10);
  const Tensor64 x = random_tensor<double>({1, 2, 4, 4}, rng);
  const Tensor64 w = random_tensor<double>({3, 2, 1, 1}, rng);
  const Tensor64 b = random_tensor<double>({3, 1, 1, 1}, rng);
  const oracle::Array want = oracle::bilinear(
      oracle::conv1x1(oracle::grid_pool(oracle::from_tensor(x), 2, 2), oracle::to_vec(w),
                      oracle::to_vec(b), 3),
      4, 4);
  EXPECT_LE(oracle::max_rel_diff(oracle::from_tensor(avg_pyramid_pool(x, 2, 2, {w, b})), want),
            1e-6);
}

TEST(PyramidPoolTest, Errors) {
  Tensor x({1, 1, 4, 4});
  ConvParams<float> p{Tensor({1, 1, 1, 1}), Tensor({1, 1, 1, 1})};
  EXPECT_THROW(avg_pyramid_pool(x, 8, 1, p), ArgumentError);
  EXPECT_THROW(avg_pyramid_pool(x, 3, 1, p), ArgumentError);
  EXPECT_THROW(grid_avg_pool(x, 5, 1), ArgumentError);
}

TEST(GridBoundsTest, FloorPartition) {
  EXPECT_EQ(grid_bounds(7, 2), (std::vector<int>{0, 3, 7}));
  EXPECT_EQ(grid_bounds(16, 4), (std::vector<int>{0, 4, 8, 12, 16}));
  EXPECT_EQ(grid_bounds(5, 4), (std::vector<int>{0, 1, 2, 3, 5}));
}

TEST(BilinearTest, Examples) {
  std::mt19937_64 rng(11);
  const Tensor64 x = random_tensor<double>({2, 2, 5, 7}, rng);
  const Tensor64 same = bilinear_resize(x, 5, 7);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(same.data()[i], x.data()[i]);

  const Tensor64 one = Tensor64::from_data({1, 1, 1, 1}, {3.25});
  const Tensor64 tiled = bilinear_resize(one, 6, 4);
  for (double v : tiled.data()) EXPECT_EQ(v, 3.25);

  const Tensor64 sq = Tensor64::from_data({1, 1, 2, 2}, {0, 1, 2, 3});
  const Tensor64 up = bilinear_resize(sq, 3, 3);
  EXPECT_EQ(up.at(0, 0, 1, 1), 1.5);
  EXPECT_EQ(up.at(0, 0, 0, 0), 0.0);
  EXPECT_EQ(up.at(0, 0, 0, 2), 1.0);
  EXPECT_EQ(up.at(0, 0, 2, 0), 2.0);
  EXPECT_EQ(up.at(0, 0, 2, 2), 3.0);
  EXPECT_EQ(up.at(0, 0, 0, 1), 0.5);
}

TEST(BilinearTest, DownThenUpThroughOnePixelIsConstant) {
  std::mt19937_64 rng(12);
  const Tensor64 x = random_tensor<double>({1, 3, 6, 5}, rng);
  const Tensor64 y = bilinear_resize(bilinear_resize(x, 1, 1), 6, 5);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 5; ++j) EXPECT_EQ(y.at(0, c, i, j), x.at(0, c, 0, 0));
}

TEST(BilinearTest, GridPointsPreserved) {
  std::mt19937_64 rng(13);
  const Tensor64 x = random_tensor<double>({1, 1, 4, 4}, rng);
  const Tensor64 y = bilinear_resize(x, 7, 7);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(y.at(0, 0, 2 * i, 2 * j), x.at(0, 0, i, j), 1e-15);
}

TEST(ConcatTest, Examples) {
  std::mt19937_64 rng(14);
  const Tensor x = random_tensor<float>({2, 3, 4, 4}, rng);
  const Tensor single = concat_channels<float>({x});
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(single.data()[i], x.data()[i]);

  const Tensor two = concat_channels<float>({Tensor({1, 1, 2, 2}, 1.5f), Tensor({1, 1, 2, 2}, -2.f)});
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      EXPECT_EQ(two.at(0, 0, i, j), 1.5f);
      EXPECT_EQ(two.at(0, 1, i, j), -2.f);
    }
}

TEST(ConcatTest, SliceRecoversInputsBitExactly) {
  std::mt19937_64 rng(15);
  std::vector<Tensor> parts = {random_tensor<float>({2, 1, 3, 5}, rng),
                               random_tensor<float>({2, 4, 3, 5}, rng),
                               random_tensor<float>({2, 2, 3, 5}, rng)};
  const Tensor y = concat_channels(parts);
  int off = 0;
  for (const Tensor& p : parts) {
    const Shape s = p.shape();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int i = 0; i < s.h; ++i)
          for (int j = 0; j < s.w; ++j) EXPECT_EQ(y.at(n, off + c, i, j), p.at(n, c, i, j));
    off += s.c;
  }
}

TEST(ConcatTest, BackwardOfSumIsOnes) {
  Tensor a({1, 2, 3, 3}, 0.5f, true), b({1, 1, 3, 3}, -1.f, true);
  Tensor y = concat_channels<float>({a, b});
  std::vector<float> ones(y.numel(), 1.0f);
  backward(y, std::span<const float>(ones));
  for (float g : a.grad()) EXPECT_EQ(g, 1.0f);
  for (float g : b.grad()) EXPECT_EQ(g, 1.0f);
}

TEST(ConcatTest, SpatialMismatchThrows) {
  EXPECT_THROW(concat_channels<float>({Tensor({1, 1, 3, 3}), Tensor({1, 1, 3, 4})}), ShapeError);
  EXPECT_THROW(concat_channels<float>({}), ShapeError);
}

TEST(ReluTest, Examples) {
  const Tensor neg = Tensor::from_data({1, 1, 1, 4}, {-1.f, -0.5f, -3.f, -1e-8f});
  const Tensor zeros = relu(neg);
  for (float v : zeros.data()) EXPECT_EQ(v, 0.0f);
  const Tensor pos = Tensor::from_data({1, 1, 1, 4}, {0.f, 0.5f, 3.f, 1e-8f});
  const Tensor y = relu(pos);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(y.data()[i], pos.data()[i]);
}

TEST(ReluTest, SubgradientAtZeroIsZero) {
  Tensor x = Tensor::from_data({1, 1, 1, 3}, {0.f, 1.f, -1.f}, true);
  Tensor y = relu(x);
  const std::vector<float> seed(3, 1.0f);
  backward(y, std::span<const float>(seed));
  EXPECT_EQ(x.grad()[0], 0.0f);
  EXPECT_EQ(x.grad()[1], 1.0f);
  EXPECT_EQ(x.grad()[2], 0.0f);
}

TEST(XentTest, UniformLogitsGiveLn2) {
  const Tensor logits({2, 2, 3, 3}, 0.7f);
  LabelMap labels{2, 3, 3, std::vector<std::int32_t>(18, 1)};
  labels.values[4] = 0;
  EXPECT_NEAR(softmax_xent_loss(logits, labels).item(), std::log(2.0), 1e-6);
}

TEST(XentTest, AllIgnoredIsZeroWithZeroGradient) {
  Tensor logits({1, 3, 2, 2}, 0.f, true);
  logits.data()[0] = 4.f;
  LabelMap labels{1, 2, 2, std::vector<std::int32_t>(4, kIgnoreLabel)};
  Tensor loss = softmax_xent_loss(logits, labels);
  EXPECT_EQ(loss.item(), 0.0f);
  backward(loss);
  ASSERT_TRUE(logits.has_grad());
  for (float g : logits.grad()) EXPECT_EQ(g, 0.0f);
}

TEST(XentTest, IgnoredPixelsGetZeroGradient) {
  std::mt19937_64 rng(16);
  Tensor logits = random_tensor<float>({1, 3, 2, 2}, rng);
  logits.set_requires_grad(true);
  LabelMap labels{1, 2, 2, {0, kIgnoreLabel, 2, 1}};
  Tensor loss = softmax_xent_loss(logits, labels);
  backward(loss);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(logits.grad()[c * 4 + 1], 0.0f);
}

TEST(XentTest, BadLabelIsDataError) {
  LabelMap labels{1, 1, 2, {0, 3}};
  EXPECT_THROW(softmax_xent_loss(Tensor({1, 3, 1, 2}), labels), DataError);
  LabelMap wrong{1, 2, 2, {0, 0, 0, 0}};
  EXPECT_THROW(softmax_xent_loss(Tensor({1, 3, 1, 2}), wrong), ShapeError);
}

TEST(SgdTest, Examples) {
  Tensor p = Tensor::from_data({1, 1, 1, 3}, {1.f, 2.f, 3.f}, true);
  p.node()->ensure_grad() = {0.5f, -1.f, 2.f};
  std::vector<Tensor> ps = {p};
  SgdState<float> st;
  sgd_step(ps, 1.0f, 0.0f, st);
  EXPECT_EQ(p.data()[0], 0.5f);
  EXPECT_EQ(p.data()[1], 3.f);
  EXPECT_EQ(p.data()[2], 1.f);
  for (float g : p.grad()) EXPECT_EQ(g, 0.f);
  // Zero gradient leaves parameters unchanged.
  SgdState<float> st2;
  sgd_step(ps, 0.3f, 0.9f, st2);
  EXPECT_EQ(p.data()[0], 0.5f);
}

TEST(SgdTest, TwoMomentumStepsMatchHandUnroll) {
  const double lr = 0.1, m = 0.9, p0 = 2.0, g1 = 0.3, g2 = -0.7;
  Tensor64 p = Tensor64::from_data({1, 1, 1, 1}, {p0}, true);
  std::vector<Tensor64> ps = {p};
  SgdState<double> st;
  p.node()->ensure_grad()[0] = g1;
  sgd_step(ps, lr, m, st);
  p.node()->ensure_grad()[0] = g2;
  sgd_step(ps, lr, m, st);
  const double v1 = g1;
  const double p1 = p0 - lr * v1;
  const double v2 = m * v1 + g2;
  const double p2 = p1 - lr * v2;
  EXPECT_EQ(p.data()[0], p2);
  EXPECT_EQ(st.velocity[0][0], v2);
}

TEST(SgdTest, MissingGradIsStateError) {
  std::vector<Tensor> ps = {Tensor({1, 1, 1, 2}, 1.f, true)};
  SgdState<float> st;
  EXPECT_THROW(sgd_step(ps, 0.1f, 0.9f, st), StateError);
}

TEST(TapeTest, SharedInputAccumulates) {
  Tensor64 x = Tensor64::from_data({1, 1, 1, 2}, {-1.0, 2.0}, true);
  Tensor64 y = concat_channels<double>({relu(x), x});
  const std::vector<double> seed = {1.0, 1.0, 1.0, 1.0};
  backward(y, std::span<const double>(seed));
  EXPECT_EQ(x.grad()[0], 1.0);
  EXPECT_EQ(x.grad()[1], 2.0);
  // A second pass accumulates into the leaf.
  Tensor64 z = relu(x);
  const std::vector<double> s2 = {1.0, 1.0};
  backward(z, std::span<const double>(s2));
  EXPECT_EQ(x.grad()[1], 3.0);
}

TEST(TapeTest, NoGradRecordsNothing) {
  Tensor x({1, 1, 2, 2}, 1.f, true);
  NoGradGuard guard;
  const Tensor y = relu(x);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.node()->parents.empty());
}

TEST(TapeTest, ShapeInvariants) {
  EXPECT_THROW(Tensor({0, 1, 1, 1}), ShapeError);
  EXPECT_THROW(Tensor::from_data({1, 1, 2, 2}, {1.f, 2.f}), ShapeError);
  Tensor x({2, 3, 4, 5});
  EXPECT_EQ(x.numel(), 120u);
  EXPECT_THROW(x.item(), ShapeError);
}

TEST(DpctTest, RoundTripAndLayout) {
  const auto dir = testutil::scratch_dir("dpct");
  std::mt19937_64 rng(17);
  const Tensor t = random_tensor<float>({2, 3, 4, 5}, rng);
  write_tensor(dir / "t.dpct", t);
  const std::string bytes = testutil::slurp(dir / "t.dpct");
  ASSERT_EQ(bytes.size(), 4u + 2 + 2 + 4 * 4 + 4 * 120);
  EXPECT_EQ(bytes.substr(0, 4), "DPCT");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1);
  EXPECT_EQ(static_cast<unsigned char>(bytes[5]), 0);
  EXPECT_EQ(static_cast<unsigned char>(bytes[6]), 4);
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 2);
  const Tensor back = read_tensor(dir / "t.dpct");
  EXPECT_EQ(back.shape(), t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) EXPECT_EQ(back.data()[i], t.data()[i]);
}

TEST(DpctTest, CorruptionNamesFile) {
  const auto dir = testutil::scratch_dir("dpct_bad");
  write_tensor(dir / "t.dpct", Tensor({1, 1, 2, 2}, 1.f));
  std::string bytes = testutil::slurp(dir / "t.dpct");
  write_file_atomic(dir / "short.dpct", bytes.substr(0, bytes.size() - 3));
  write_file_atomic(dir / "magic.dpct", "XPCT" + bytes.substr(4));
  std::string ver = bytes;
  ver[4] = 9;
  write_file_atomic(dir / "ver.dpct", ver);
  for (const char* name : {"short.dpct", "magic.dpct", "ver.dpct"}) {
    try {
      read_tensor(dir / name);
      FAIL() << name;
    } catch (const DataError& e) {
      EXPECT_NE(std::string(e.what()).find(name), std::string::npos) << e.what();
    }
  }
  EXPECT_THROW(read_tensor(dir / "missing.dpct"), DataError);
}

}  // namespace
}  // namespace dpc
